#pragma once

#include <map>
#include <random>
#include <set>
#include <vector>

#include "motslam/scene.hpp"
#include "motslam/solver.hpp"

namespace motslam {

struct FrontendParams {
  int ransac_max_iterations = 200;
  double ransac_inlier_threshold_px = 2.0;
  double ransac_confidence = 0.99;
  int min_correspondences = 6;

  double projection_sigma_px = 1.0;
  double flow_sigma_px = 1.0;
  double flow_prior_sigma_px = 1.0;
  double point3d_sigma_m = 0.01;     // 3D measurement anchors
  double motion3d_sigma_m = 0.001;   // rigid-motion residual; the model is exact
  double camera_prior_sigma = 1e-4;  // strong prior pinning cameras in motion refinement
  double huber_k = 1.345;
  double gate_sigma = 3.0;  // Mahalanobis gate on 3D residuals

  bool refine_flow = true;
  bool refine_motion = true;
  std::uint64_t seed = 0;  // RANSAC sampling; per-frame/per-object streams derived from it
};

struct PnpResult {
  Pose3 pose;                     // estimated camera-style pose P with r = z - pi(P^{-1} m)
  std::vector<bool> inlier_mask;  // per input correspondence
  double inlier_rms_px = 0.0;
  int iterations = 0;
};

// RANSAC (LM on minimal 6-point subsets, seeded at `seed_pose`) with a final
// polish on the inlier set. Deterministic under `rng`.
PnpResult ransacPnp(const std::vector<Point3>& world_points, const std::vector<Vector2>& pixels,
                    const CameraModel& cam, const Pose3& seed_pose, const FrontendParams& params,
                    std::mt19937_64& rng);

// Initial camera pose from static 3D-2D correspondences (world map at k-1,
// pixels at k).
PnpResult estimateCameraPose(const std::vector<Point3>& map_points,
                             const std::vector<Vector2>& pixels, const CameraModel& cam,
                             const Pose3& prev_pose, const FrontendParams& params,
                             std::mt19937_64& rng);

struct MotionEstimate {
  Pose3 motion;  // ^W H_{k-1 -> k}
  std::vector<bool> inlier_mask;
  double inlier_rms_px = 0.0;
};

// Object motion from world points at k-1 and pixels at k: solves the warped
// PnP for G = X_k^{-1} H and recovers H = X_k G.
MotionEstimate estimateObjectMotion(const std::vector<Point3>& points_prev_world,
                                    const std::vector<Vector2>& pixels_curr,
                                    const Pose3& x_curr, const CameraModel& cam,
                                    const Pose3& motion_seed, const FrontendParams& params,
                                    std::mt19937_64& rng);

struct FlowRefinementInput {
  TrackletId tracklet = 0;
  Point3 map_point = Point3::Zero();  // ^W m (static) or ^W m_{k-1} (object)
  Vector2 pixel_prev = Vector2::Zero();
  Vector2 flow = Vector2::Zero();
};

struct FlowRefinementResult {
  Pose3 transform;  // refined X_k (camera) or G (object)
  std::map<TrackletId, Vector2> flows;
  std::vector<TrackletId> outliers;
};

enum class FlowStage { Camera, Object };

// Eq.-style joint refinement of the transform and per-track flows; tracks with
// large reprojection errors are dropped and the graph re-solved.
FlowRefinementResult refineJointFlow(FlowStage stage, const std::vector<FlowRefinementInput>& tracks,
                                     const Pose3& initial_transform, const CameraModel& cam,
                                     const FrontendParams& params);

struct MotionRefinementInput {
  TrackletId tracklet = 0;
  Vector2 pixel_prev = Vector2::Zero();
  Vector2 pixel_curr = Vector2::Zero();
  Point3 local_prev = Point3::Zero();  // z_3D at k-1
  Point3 local_curr = Point3::Zero();  // z_3D at k
};

struct MotionRefinementResult {
  Pose3 motion;
  Pose3 camera_prev;  // strongly priored; stays at the input up to the prior weight
  Pose3 camera_curr;
  std::vector<TrackletId> outliers;
  double final_cost = 0.0;
};

// Motion-only 3D refinement: per-object graph over both frames' points with
// strongly-priored camera poses.
MotionRefinementResult refineObjectMotion(ObjectId object, FrameId frame,
                                          const std::vector<MotionRefinementInput>& tracks,
                                          const Pose3& x_prev, const Pose3& x_curr,
                                          const Pose3& initial_motion, const CameraModel& cam,
                                          const FrontendParams& params);

struct ObjectFrameEstimate {
  Pose3 motion;  // ^W H_{k-1 -> k}
  int inlier_count = 0;
  int outlier_count = 0;
};

struct FrontendFrame {
  FrameId frame = 0;
  Pose3 camera_pose;
  std::map<ObjectId, ObjectFrameEstimate> motions;   // empty at the first frame
  std::vector<TrackedMeasurement> static_inliers;    // surviving measurement sets
  std::vector<TrackedMeasurement> dynamic_inliers;
  // Tracklets that passed a pair check at this frame; a failed pair whose
  // predecessor was never verified implicates the predecessor as well.
  std::set<TrackletId> verified;
  int static_outliers = 0;
  int dynamic_outliers = 0;
};

struct FrontendOutput {
  std::vector<FrontendFrame> frames;
  // Every (tracklet, frame) the pipeline rejected at any stage.
  std::set<std::pair<TrackletId, FrameId>> flagged_outliers;

  const FrontendFrame& at(FrameId k) const { return frames.at(k); }
  Pose3 odometry(FrameId k) const {  // X_{k-1}^{-1} X_k
    return frames.at(k - 1).camera_pose.inverse() * frames.at(k).camera_pose;
  }
  std::map<ObjectId, std::map<FrameId, Pose3>> motionsByObject() const;
};

// Per-frame pipeline: camera PnP + joint flow refinement, then per-object PnP,
// flow refinement and 3D motion-only refinement. Objects are processed
// independently (deterministic per-object RNG streams).
class Frontend {
 public:
  Frontend(FrontendParams params, CameraModel cam)
      : params_(std::move(params)), cam_(std::move(cam)) {}

  FrontendOutput run(const MeasurementSet& measurements) const;

 private:
  FrontendParams params_;
  CameraModel cam_;
};

}  // namespace motslam
