#pragma once

#include <map>
#include <string>
#include <vector>

#include "motslam/frontend.hpp"
#include "motslam/solver.hpp"

namespace motslam {

enum class FormulationKind { WCME, WCPE };

FormulationKind formulationFromString(const std::string& name);
std::string toString(FormulationKind kind);

// How an object's first pose is fixed. Estimated motions are invariant to this
// choice; recovered/estimated pose trajectories are anchored by it.
struct AnchorPolicy {
  enum class Kind { Centroid, Provided };
  Kind kind = Kind::Centroid;
  std::map<ObjectId, Pose3> provided;  // per object; Centroid fallback when missing
};

struct BackendParams {
  // Sensor model of the camera-frame point measurement: lateral noise grows
  // with depth (pixel channel), the depth channel is constant.
  double point_lateral_sigma_per_m = 0.002;  // ~ pixel sigma / focal length
  double point_depth_sigma = 0.01;           // m
  double point_sigma_floor = 1e-3;           // m
  double motion_sigma = 1e-3;  // ternary/quaternary rigidity residual, m
  // Calibrated to the front-end's actual frame-to-frame accuracy; overselling
  // the odometry drowns the point evidence.
  double odom_sigma_rot = 5e-3;   // rad
  double odom_sigma_trans = 5e-2; // m
  double camera_prior_sigma = 1e-4;   // first-in-window camera gauge prior
  // Constant-motion prior. The translation block stays loose (world-frame
  // motion deltas scale with the object's distance from the origin); the
  // rotation angle is immune to that scaling and may be prior-tightened.
  double smoothing_sigma_rot = 0.005;  // rad
  double smoothing_sigma_trans = 1.0;  // m
  double object_pose_prior_sigma = 10.0;  // WCPE per-chain gauge prior
  double huber_k = 1.345;
  SolverConfig solver;
  AnchorPolicy anchor;
};

struct ObjectEstimate {
  FrameId first_frame = 0;
  std::map<FrameId, Pose3> poses;    // ^W L_k, anchored per AnchorPolicy
  std::map<FrameId, Pose3> motions;  // ^W H_{k-1 -> k}
  std::map<FrameId, std::map<TrackletId, Point3>> points;
};

struct EstimatorOutput {
  FormulationKind kind = FormulationKind::WCME;
  std::vector<Pose3> camera_poses;
  std::map<ObjectId, ObjectEstimate> objects;
  std::map<TrackletId, Point3> static_points;
  // Measurements whose robust kernel weight collapsed at the solution; the
  // Huber side of outlier rejection.
  std::set<std::pair<TrackletId, FrameId>> flagged_outliers;
  std::vector<SolveStats> window_stats;
  std::vector<std::pair<FrameId, FrameId>> windows;
  std::vector<std::string> warnings;

  std::map<ObjectId, std::map<FrameId, Pose3>> motionsByObject() const;
};

// One window's estimation problem plus the bookkeeping to read results back.
struct WindowProblem {
  FactorGraph graph;
  Values initial;
  FrameId begin = 0;
  FrameId end = 0;
  std::map<ObjectId, std::vector<FrameId>> motion_frames;  // WCME H variables
  std::map<ObjectId, std::vector<FrameId>> pose_frames;    // WCPE L variables
  // (tracklet, frame, factor index) of every point measurement factor, for
  // robust-weight reporting after the solve.
  std::vector<std::tuple<TrackletId, FrameId, std::size_t>> measurement_factors;
  std::vector<std::string> warnings;
};

// Builds the world-centric motion graph over frames [begin, end]. `warm_start`
// overrides default initial values for any variable it contains.
WindowProblem buildWcme(const FrontendOutput& fe, FrameId begin, FrameId end,
                        const BackendParams& params, const Values* warm_start = nullptr);

// World-centric pose graph; object poses replace motions as variables.
WindowProblem buildWcpe(const FrontendOutput& fe, FrameId begin, FrameId end,
                        const BackendParams& params, const Values* warm_start = nullptr);

// Chains L_k = H_{k-1->k} ... H_{s->s+1} L_s from the anchor. `motions` maps k
// to H_{k-1->k} and must be contiguous from anchor_frame + 1.
std::map<FrameId, Pose3> recoverObjectPoses(const std::map<FrameId, Pose3>& motions,
                                            FrameId anchor_frame, const Pose3& anchor_pose);

EstimatorOutput runBatch(FormulationKind kind, const FrontendOutput& fe,
                         const BackendParams& params);

// Solves batch problems every `window` frames, carrying estimates of
// overlapping variables forward as initialization; per-frame outputs come from
// the last window that optimized them.
EstimatorOutput runSlidingWindow(FormulationKind kind, const FrontendOutput& fe, int window,
                                 int overlap, const BackendParams& params);

}  // namespace motslam
