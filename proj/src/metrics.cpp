#include "motslam/metrics.hpp"

#include <cmath>

#include <Eigen/SVD>

namespace motslam {

RmseComponents rmseComponents(const std::vector<ErrorSample>& samples) {
  if (samples.empty()) throw EmptySampleSetError();
  double sum_t2 = 0.0;
  double sum_r2 = 0.0;
  for (const auto& s : samples) {
    sum_t2 += s.error.translation().squaredNorm();
    const double angle = s.error.rotationAngle();
    sum_r2 += angle * angle;
  }
  const double n = static_cast<double>(samples.size());
  return {std::sqrt(sum_t2 / n), std::sqrt(sum_r2 / n) * 180.0 / M_PI, samples.size()};
}

Pose3 umeyamaAlign(const std::vector<Vector3>& src, const std::vector<Vector3>& dst) {
  if (src.size() != dst.size()) throw LengthMismatchError("alignment input sizes differ");
  if (src.size() < 3) throw DegenerateTrajectoryError("alignment needs >= 3 positions");

  const double n = static_cast<double>(src.size());
  Vector3 mu_s = Vector3::Zero();
  Vector3 mu_d = Vector3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    mu_s += src[i];
    mu_d += dst[i];
  }
  mu_s /= n;
  mu_d /= n;

  Matrix3 cov = Matrix3::Zero();
  double src_spread = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    cov += (dst[i] - mu_d) * (src[i] - mu_s).transpose();
    src_spread += (src[i] - mu_s).squaredNorm();
  }
  cov /= n;

  Eigen::JacobiSVD<Matrix3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector3 sv = svd.singularValues();
  // Rotation about a line of points is unobservable.
  if (src_spread < 1e-18 || sv[1] < 1e-12 * std::max(sv[0], 1e-300)) {
    throw DegenerateTrajectoryError("collinear or coincident positions");
  }
  Matrix3 s = Matrix3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) s(2, 2) = -1.0;
  const Matrix3 r = svd.matrixU() * s * svd.matrixV().transpose();
  return {r, mu_d - r * mu_s};
}

Pose3 umeyamaAlignTrajectories(const std::vector<Pose3>& src, const std::vector<Pose3>& dst) {
  std::vector<Vector3> ps, pd;
  ps.reserve(src.size());
  pd.reserve(dst.size());
  for (const auto& p : src) ps.push_back(p.translation());
  for (const auto& p : dst) pd.push_back(p.translation());
  return umeyamaAlign(ps, pd);
}

double ate(const std::vector<Pose3>& est, const std::vector<Pose3>& gt, bool align) {
  if (est.size() != gt.size()) throw LengthMismatchError("trajectory lengths differ");
  if (est.empty()) throw EmptySampleSetError();
  const Pose3 t = align ? umeyamaAlignTrajectories(est, gt) : Pose3::identity();
  std::vector<ErrorSample> samples;
  samples.reserve(est.size());
  for (std::size_t k = 0; k < est.size(); ++k) {
    samples.push_back({static_cast<FrameId>(k), std::nullopt, gt[k].inverse() * (t * est[k])});
  }
  return rmseComponents(samples).translation_m;
}

std::vector<ErrorSample> rpeSamples(const std::vector<Pose3>& est, const std::vector<Pose3>& gt) {
  if (est.size() != gt.size()) throw LengthMismatchError("trajectory lengths differ");
  if (est.size() < 2) throw LengthMismatchError("RPE needs >= 2 frames");
  std::vector<ErrorSample> samples;
  samples.reserve(est.size() - 1);
  for (std::size_t k = 1; k < est.size(); ++k) {
    const Pose3 rel_gt = gt[k - 1].inverse() * gt[k];
    const Pose3 rel_est = est[k - 1].inverse() * est[k];
    samples.push_back({static_cast<FrameId>(k), std::nullopt, rel_gt.inverse() * rel_est});
  }
  return samples;
}

RmseComponents rpe(const std::vector<Pose3>& est, const std::vector<Pose3>& gt) {
  return rmseComponents(rpeSamples(est, gt));
}

std::vector<ErrorSample> motionErrorSamples(ObjectId object,
                                            const std::map<FrameId, Pose3>& est_motions,
                                            const GtObject& gt) {
  std::vector<ErrorSample> samples;
  for (const auto& [k, h_est] : est_motions) {
    if (!gt.inWindow(k) || !gt.inWindow(k - 1)) {
      throw MissingGroundTruthPoseError("no ground-truth pose for object " +
                                        std::to_string(object) + " around frame " +
                                        std::to_string(k));
    }
    const Pose3& l_prev = gt.poseAt(k - 1);
    // Both motions expressed in the ground-truth body frame at k-1.
    const Pose3 h_est_local = l_prev.inverse() * h_est * l_prev;
    const Pose3 h_gt_local = l_prev.inverse() * gt.motionAt(k) * l_prev;
    samples.push_back({k, object, h_gt_local.inverse() * h_est_local});
  }
  return samples;
}

std::map<ObjectId, RmseComponents> motionError(
    const std::map<ObjectId, std::map<FrameId, Pose3>>& est_motions, const GroundTruthScene& gt) {
  std::map<ObjectId, RmseComponents> out;
  for (const auto& [id, motions] : est_motions) {
    const auto it = gt.objects.find(id);
    if (it == gt.objects.end()) {
      throw MissingGroundTruthPoseError("unknown object " + std::to_string(id));
    }
    // Exclusion rule: need at least 3 consecutive frames, i.e. two consecutive
    // motion samples somewhere in the track.
    bool evaluable = false;
    for (const auto& [k, h] : motions) {
      if (motions.count(k + 1)) {
        evaluable = true;
        break;
      }
    }
    if (!evaluable) continue;
    out.emplace(id, rmseComponents(motionErrorSamples(id, motions, it->second)));
  }
  return out;
}

RmseComponents averageOverObjects(const std::map<ObjectId, RmseComponents>& per_object) {
  RmseComponents avg;
  if (per_object.empty()) return avg;
  for (const auto& [id, r] : per_object) {
    avg.translation_m += r.translation_m;
    avg.rotation_deg += r.rotation_deg;
    avg.count += r.count;
  }
  const double n = static_cast<double>(per_object.size());
  avg.translation_m /= n;
  avg.rotation_deg /= n;
  return avg;
}

MotionChangeDiagnostic motionChangeDiagnostic(const Pose3& local_delta, const Pose3& anchor) {
  return {local_delta, changeMotionFrame(local_delta, anchor)};
}

}  // namespace motslam
