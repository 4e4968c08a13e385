#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "motslam/camera.hpp"
#include "motslam/pose3.hpp"
#include "motslam/types.hpp"

namespace motslam {

// Applied per measurement channel; all sigmas in the unit of the channel.
struct NoiseSpec {
  double pixel_sigma = 1.0;   // px
  double depth_sigma = 0.01;  // m
  double flow_sigma = 0.0;    // px
  double outlier_rate = 0.0;  // in [0, 1)

  void validate() const;
};

enum class MotionScriptKind { Constant, Piecewise, Sampled };

struct ObjectConfig {
  ObjectId id = 1;
  int num_points = 100;
  Vector3 center = Vector3(0.0, 0.0, 10.0);  // world position of the body centroid at first_frame
  double half_extent = 0.5;                  // body points sampled in a cube of this half-size
  FrameId first_frame = 0;
  FrameId last_frame = -1;  // -1: until the end of the sequence
  MotionScriptKind motion = MotionScriptKind::Constant;
  Twist twist;                                   // constant per-frame local motion
  std::map<FrameId, Twist> piecewise;            // from-frame -> twist (Piecewise)
  double sampled_rot_step = 0.01;                // random-walk step sigmas (Sampled)
  double sampled_trans_step = 0.02;
  std::vector<std::pair<FrameId, FrameId>> occlusions;  // inclusive frame intervals
};

struct SceneConfig {
  int frames = 15;
  std::uint64_t seed = 0;
  CameraModel camera;
  Twist camera_twist;  // constant per-frame local camera motion
  int static_points = 50;
  Vector3 static_box_min = Vector3(-12.0, -8.0, 4.0);
  Vector3 static_box_max = Vector3(12.0, 8.0, 30.0);
  std::vector<ObjectConfig> objects;
  NoiseSpec noise;

  void validate() const;
};

// One ground-truth rigid object: pose trajectory over its observed window and a
// time-invariant body-frame point cloud. The body frame sits at the point-cloud
// centroid with identity orientation at the first observation.
struct GtObject {
  ObjectId id = 0;
  FrameId first_frame = 0;
  FrameId last_frame = 0;
  std::vector<Pose3> poses;          // index k - first_frame
  std::vector<Point3> body_points;   // ^L m, centroid at origin
  std::vector<TrackletId> tracklets;  // global tracklet id per body point
  std::vector<std::pair<FrameId, FrameId>> occlusions;

  bool inWindow(FrameId k) const { return k >= first_frame && k <= last_frame; }
  bool occludedAt(FrameId k) const;
  bool observedAt(FrameId k) const { return inWindow(k) && !occludedAt(k); }
  const Pose3& poseAt(FrameId k) const { return poses.at(k - first_frame); }
  // Observed motion ^W H_{k-1 -> k}.
  Pose3 motionAt(FrameId k) const { return poseAt(k) * poseAt(k - 1).inverse(); }
  Point3 worldPoint(std::size_t point_index, FrameId k) const {
    return poseAt(k) * body_points[point_index];
  }
};

struct GroundTruthScene {
  std::vector<Pose3> camera_trajectory;  // world frame = first camera pose
  std::vector<Point3> static_points;
  std::vector<TrackletId> static_tracklets;
  std::map<ObjectId, GtObject> objects;

  FrameId frames() const { return static_cast<FrameId>(camera_trajectory.size()); }
};

struct TrackedMeasurement {
  FrameId frame = 0;
  TrackletId tracklet = 0;
  ObjectId object = kStaticObjectId;
  Vector2 pixel = Vector2::Zero();
  double depth = 0.0;
  Point3 local = Point3::Zero();        // z_3D = backProject(pixel, depth)
  std::optional<Vector2> flow;          // measured flow k-1 -> k, present when tracked at k-1
  bool injected_outlier = false;        // hidden from estimators; kept for evaluation

  bool isStatic() const { return object == kStaticObjectId; }
};

struct FrameMeasurements {
  FrameId frame = 0;
  std::vector<TrackedMeasurement> measurements;

  std::vector<const TrackedMeasurement*> staticSet() const;
  std::vector<const TrackedMeasurement*> objectSet(ObjectId j) const;
  std::vector<ObjectId> observedObjects() const;
  const TrackedMeasurement* find(TrackletId tracklet) const;
};

struct MeasurementSet {
  NoiseSpec applied;
  std::vector<FrameMeasurements> frames;
};

GroundTruthScene generateScene(const SceneConfig& config);

MeasurementSet simulateMeasurements(const GroundTruthScene& scene, const CameraModel& cam,
                                    const NoiseSpec& noise, std::uint64_t seed);

struct Dataset {
  SceneConfig config;
  GroundTruthScene scene;
  MeasurementSet measurements;
};

// generateScene + simulateMeasurements under the config's seed.
Dataset makeDataset(const SceneConfig& config);

}  // namespace motslam
