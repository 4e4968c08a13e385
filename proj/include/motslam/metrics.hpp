#pragma once

#include <map>
#include <optional>
#include <vector>

#include "motslam/pose3.hpp"
#include "motslam/scene.hpp"

namespace motslam {

struct ErrorSample {
  FrameId frame = 0;
  std::optional<ObjectId> object;
  Pose3 error;  // E_k in SE(3)
};

struct RmseComponents {
  double translation_m = 0.0;
  double rotation_deg = 0.0;
  std::size_t count = 0;
};

// RMSE of translation norms (m) and rotation angles (deg) over error samples.
RmseComponents rmseComponents(const std::vector<ErrorSample>& samples);

// Rigid transform T minimizing sum |T src_i - dst_i|^2 (Umeyama, scale fixed
// to 1). Needs >= 3 non-collinear positions.
Pose3 umeyamaAlign(const std::vector<Vector3>& src, const std::vector<Vector3>& dst);
Pose3 umeyamaAlignTrajectories(const std::vector<Pose3>& src, const std::vector<Pose3>& dst);

// Absolute trajectory error, translation RMSE; aligns est onto gt first unless
// disabled.
double ate(const std::vector<Pose3>& est, const std::vector<Pose3>& gt, bool align = true);

// Relative pose error between consecutive frames.
RmseComponents rpe(const std::vector<Pose3>& est, const std::vector<Pose3>& gt);
std::vector<ErrorSample> rpeSamples(const std::vector<Pose3>& est, const std::vector<Pose3>& gt);

// Motion Error: compares motions expressed in the ground-truth object frame,
// so it is invariant to each estimator's choice of body frame.
// est_motions maps frame k to the estimated ^W H_{k-1 -> k}.
std::vector<ErrorSample> motionErrorSamples(ObjectId object,
                                            const std::map<FrameId, Pose3>& est_motions,
                                            const GtObject& gt);

// Per-object ME over a multi-object estimate. Objects with fewer than 3
// consecutive observed frames (fewer than 2 consecutive motion samples)
// contribute nothing.
std::map<ObjectId, RmseComponents> motionError(
    const std::map<ObjectId, std::map<FrameId, Pose3>>& est_motions, const GroundTruthScene& gt);

// Equal-weight average of per-object RMSE values.
RmseComponents averageOverObjects(const std::map<ObjectId, RmseComponents>& per_object);

struct MotionChangeDiagnostic {
  Pose3 local_delta;
  Pose3 world_delta;  // anchor * local_delta * anchor^{-1}
};

// Frame-change of a motion increment; the world-frame translation grows with
// the anchor's distance from the origin, which is what the smoothing factor's
// large covariance compensates for.
MotionChangeDiagnostic motionChangeDiagnostic(const Pose3& local_delta, const Pose3& anchor);

}  // namespace motslam
