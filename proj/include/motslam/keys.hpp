#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <string>

#include "motslam/types.hpp"

namespace motslam {

enum class VariableKind : std::uint8_t { CameraPose, ObjectMotion, ObjectPose, Point, Flow };

// Identifies one variable of an estimation problem. Unused id fields stay at
// their defaults so keys order and hash deterministically.
struct VariableKey {
  VariableKind kind = VariableKind::CameraPose;
  FrameId frame = 0;
  ObjectId object = 0;
  TrackletId tracklet = 0;

  auto operator<=>(const VariableKey&) const = default;

  std::string str() const;

  static VariableKey cameraPose(FrameId k) { return {VariableKind::CameraPose, k, 0, 0}; }
  // Motion from k-1 to k of object j.
  static VariableKey objectMotion(ObjectId j, FrameId k) {
    return {VariableKind::ObjectMotion, k, j, 0};
  }
  static VariableKey objectPose(ObjectId j, FrameId k) {
    return {VariableKind::ObjectPose, k, j, 0};
  }
  // Static point: frame fixed at -1 (time-invariant). Dynamic point: per frame.
  static VariableKey staticPoint(TrackletId i) { return {VariableKind::Point, -1, 0, i}; }
  static VariableKey dynamicPoint(TrackletId i, FrameId k) {
    return {VariableKind::Point, k, 0, i};
  }
  static VariableKey flow(TrackletId i, FrameId k) { return {VariableKind::Flow, k, 0, i}; }
};

struct VariableKeyHash {
  std::size_t operator()(const VariableKey& k) const {
    std::size_t h = std::hash<std::uint64_t>()(
        (static_cast<std::uint64_t>(k.kind) << 56) ^
        (static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.frame)) << 24) ^
        static_cast<std::uint64_t>(static_cast<std::uint32_t>(k.object)));
    return h ^ (std::hash<std::int64_t>()(k.tracklet) + 0x9e3779b97f4a7c15ULL + (h << 6));
  }
};

}  // namespace motslam
