#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace motslam {

using FrameId = int;
using ObjectId = int;
using TrackletId = std::int64_t;

// Object id 0 is reserved for the static background.
inline constexpr ObjectId kStaticObjectId = 0;

using Vector2 = Eigen::Vector2d;
using Vector3 = Eigen::Vector3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using Matrix3 = Eigen::Matrix3d;
using Matrix4 = Eigen::Matrix4d;
using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Point3 = Eigen::Vector3d;

// ---------------------------------------------------------------------------
// Error types. Each maps to one failure mode named by a module contract.
// ---------------------------------------------------------------------------

struct AngleNearPiError : std::domain_error {
  explicit AngleNearPiError(double angle)
      : std::domain_error("se3 log undefined: rotation angle " + std::to_string(angle) +
                          " within 1e-6 of pi") {}
};

struct BehindCameraError : std::domain_error {
  BehindCameraError() : std::domain_error("point behind camera (local z <= 0)") {}
};

struct ConfigError : std::invalid_argument {
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

struct NonPsdCovarianceError : std::invalid_argument {
  explicit NonPsdCovarianceError(const std::string& what) : std::invalid_argument(what) {}
};

struct SingularSystemError : std::runtime_error {
  explicit SingularSystemError(const std::string& what) : std::runtime_error(what) {}
};

struct GraphStructureError : std::invalid_argument {
  explicit GraphStructureError(const std::string& what) : std::invalid_argument(what) {}
};

struct InsufficientCorrespondencesError : std::runtime_error {
  explicit InsufficientCorrespondencesError(std::size_t got, std::size_t need)
      : std::runtime_error("insufficient correspondences: " + std::to_string(got) + " < " +
                           std::to_string(need)) {}
};

struct DegenerateGeometryError : std::runtime_error {
  explicit DegenerateGeometryError(const std::string& what) : std::runtime_error(what) {}
};

struct EmptyWindowError : std::invalid_argument {
  explicit EmptyWindowError(const std::string& what) : std::invalid_argument(what) {}
};

struct BrokenTrackError : std::runtime_error {
  explicit BrokenTrackError(const std::string& what) : std::runtime_error(what) {}
};

struct GapInMotionChainError : std::runtime_error {
  explicit GapInMotionChainError(const std::string& what) : std::runtime_error(what) {}
};

struct EmptySampleSetError : std::invalid_argument {
  EmptySampleSetError() : std::invalid_argument("empty error-sample set") {}
};

struct LengthMismatchError : std::invalid_argument {
  explicit LengthMismatchError(const std::string& what) : std::invalid_argument(what) {}
};

struct DegenerateTrajectoryError : std::runtime_error {
  explicit DegenerateTrajectoryError(const std::string& what) : std::runtime_error(what) {}
};

struct MissingGroundTruthPoseError : std::runtime_error {
  explicit MissingGroundTruthPoseError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace motslam
