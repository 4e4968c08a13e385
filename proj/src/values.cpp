#include "motslam/values.hpp"

namespace motslam {

std::string VariableKey::str() const {
  switch (kind) {
    case VariableKind::CameraPose:
      return "X(" + std::to_string(frame) + ")";
    case VariableKind::ObjectMotion:
      return "H(" + std::to_string(object) + "," + std::to_string(frame) + ")";
    case VariableKind::ObjectPose:
      return "L(" + std::to_string(object) + "," + std::to_string(frame) + ")";
    case VariableKind::Point:
      return frame < 0 ? "m(" + std::to_string(tracklet) + ")"
                       : "m(" + std::to_string(tracklet) + "," + std::to_string(frame) + ")";
    case VariableKind::Flow:
      return "f(" + std::to_string(tracklet) + "," + std::to_string(frame) + ")";
  }
  return "?";
}

int tangentDim(const VariableValue& v) {
  if (std::holds_alternative<Pose3>(v)) return 6;
  if (std::holds_alternative<Vector3>(v)) return 3;
  return 2;
}

VariableValue retract(const VariableValue& v, const Eigen::VectorXd& delta) {
  if (const auto* pose = std::get_if<Pose3>(&v)) {
    return Pose3::exp(Twist(Vector6(delta))) * (*pose);
  }
  if (const auto* point = std::get_if<Vector3>(&v)) {
    return Vector3(*point + delta);
  }
  return Vector2(std::get<Vector2>(v) + delta);
}

void Values::insert(const VariableKey& key, const VariableValue& value) {
  if (!map_.emplace(key, value).second) {
    throw GraphStructureError("duplicate variable " + key.str());
  }
}

void Values::update(const VariableKey& key, const VariableValue& value) {
  auto it = map_.find(key);
  if (it == map_.end()) throw GraphStructureError("unknown variable " + key.str());
  it->second = value;
}

const VariableValue& Values::at(const VariableKey& key) const {
  auto it = map_.find(key);
  if (it == map_.end()) throw GraphStructureError("unknown variable " + key.str());
  return it->second;
}

const Pose3& Values::atPose(const VariableKey& key) const { return std::get<Pose3>(at(key)); }
const Vector3& Values::atPoint(const VariableKey& key) const { return std::get<Vector3>(at(key)); }
const Vector2& Values::atFlow(const VariableKey& key) const { return std::get<Vector2>(at(key)); }

int Values::tangentDim() const {
  int dim = 0;
  for (const auto& [key, value] : map_) dim += motslam::tangentDim(value);
  return dim;
}

}  // namespace motslam
