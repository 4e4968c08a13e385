#include "motslam/backend.hpp"

#include <algorithm>
#include <set>

namespace motslam {

FormulationKind formulationFromString(const std::string& name) {
  if (name == "wcme") return FormulationKind::WCME;
  if (name == "wcpe") return FormulationKind::WCPE;
  throw ConfigError("unknown formulation '" + name + "' (expected wcme or wcpe)");
}

std::string toString(FormulationKind kind) {
  return kind == FormulationKind::WCME ? "wcme" : "wcpe";
}

std::map<ObjectId, std::map<FrameId, Pose3>> EstimatorOutput::motionsByObject() const {
  std::map<ObjectId, std::map<FrameId, Pose3>> out;
  for (const auto& [id, obj] : objects) out[id] = obj.motions;
  return out;
}

namespace {

Vector6 smoothingSigmas(const BackendParams& p) {
  Vector6 s;
  s << p.smoothing_sigma_rot, p.smoothing_sigma_rot, p.smoothing_sigma_rot,
      p.smoothing_sigma_trans, p.smoothing_sigma_trans, p.smoothing_sigma_trans;
  return s;
}

Vector6 odometrySigmas(const BackendParams& p) {
  Vector6 s;
  s << p.odom_sigma_rot, p.odom_sigma_rot, p.odom_sigma_rot, p.odom_sigma_trans,
      p.odom_sigma_trans, p.odom_sigma_trans;
  return s;
}

// Tracked dynamic pair: the same tracklet surviving at k-1 and k.
struct TrackPair {
  TrackletId tracklet;
  const TrackedMeasurement* prev;
  const TrackedMeasurement* curr;
};

struct WindowLayout {
  std::map<ObjectId, std::map<FrameId, std::vector<TrackPair>>> pairs;  // by object, by k
  std::map<ObjectId, std::vector<const TrackedMeasurement*>> first_observations;
  std::map<ObjectId, FrameId> first_frame;
};

WindowLayout layoutWindow(const FrontendOutput& fe, FrameId begin, FrameId end) {
  WindowLayout layout;
  for (FrameId k = begin; k <= end; ++k) {
    for (const auto& m : fe.at(k).dynamic_inliers) {
      auto& first = layout.first_frame;
      if (!first.count(m.object)) {
        first[m.object] = k;
      }
      if (layout.first_frame[m.object] == k) {
        layout.first_observations[m.object].push_back(&m);
      }
      if (k > begin) {
        for (const auto& p : fe.at(k - 1).dynamic_inliers) {
          if (p.tracklet == m.tracklet && p.object == m.object) {
            layout.pairs[m.object][k].push_back({m.tracklet, &p, &m});
            break;
          }
        }
      }
    }
  }
  return layout;
}

Pose3 centroidAnchor(const std::vector<const TrackedMeasurement*>& observations,
                     const Pose3& camera_pose) {
  Vector3 centroid = Vector3::Zero();
  for (const auto* m : observations) centroid += camera_pose * m->local;
  centroid /= static_cast<double>(observations.size());
  return {Eigen::Quaterniond::Identity(), centroid};
}

Pose3 anchorPose(const AnchorPolicy& policy, ObjectId object,
                 const std::vector<const TrackedMeasurement*>& observations,
                 const Pose3& camera_pose) {
  if (policy.kind == AnchorPolicy::Kind::Provided) {
    if (const auto it = policy.provided.find(object); it != policy.provided.end()) {
      return it->second;
    }
  }
  return centroidAnchor(observations, camera_pose);
}

// Camera-frame measurement covariance: diagonal, lateral scaled by depth.
NoiseModel pointNoise(const BackendParams& params, double depth) {
  const double lateral =
      std::max(params.point_sigma_floor, params.point_lateral_sigma_per_m * depth);
  const double along = std::max(params.point_sigma_floor, params.point_depth_sigma);
  Vector3 sigmas(lateral, lateral, along);
  return NoiseModel::diagonal(sigmas).robust(params.huber_k);
}

// Shared structure: camera chain, static map and dynamic point instances.
void buildCommon(WindowProblem& wp, const FrontendOutput& fe, const BackendParams& params) {
  const NoiseModel odom_noise = NoiseModel::diagonal(odometrySigmas(params));

  for (FrameId k = wp.begin; k <= wp.end; ++k) {
    wp.initial.insert(VariableKey::cameraPose(k), fe.at(k).camera_pose);
    if (k > wp.begin) {
      wp.graph.emplace<OdometryBetweenFactor>(VariableKey::cameraPose(k - 1),
                                              VariableKey::cameraPose(k), fe.odometry(k),
                                              odom_noise);
    }
  }

  std::set<TrackletId> static_created;
  for (FrameId k = wp.begin; k <= wp.end; ++k) {
    const Pose3& x_init = fe.at(k).camera_pose;
    for (const auto& m : fe.at(k).static_inliers) {
      const VariableKey key = VariableKey::staticPoint(m.tracklet);
      if (static_created.insert(m.tracklet).second) {
        wp.initial.insert(key, Vector3(x_init * m.local));
      }
      wp.measurement_factors.emplace_back(m.tracklet, k, wp.graph.size());
      wp.graph.emplace<PointMeasurementFactor>(VariableKey::cameraPose(k), key, m.local,
                                               pointNoise(params, m.depth));
    }
    for (const auto& m : fe.at(k).dynamic_inliers) {
      const VariableKey key = VariableKey::dynamicPoint(m.tracklet, k);
      wp.initial.insert(key, Vector3(x_init * m.local));
      wp.measurement_factors.emplace_back(m.tracklet, k, wp.graph.size());
      wp.graph.emplace<PointMeasurementFactor>(VariableKey::cameraPose(k), key, m.local,
                                               pointNoise(params, m.depth));
    }
  }
}

void applyWarmStart(WindowProblem& wp, const Values* warm_start) {
  if (!warm_start) return;
  for (const auto& [key, value] : *warm_start) {
    if (wp.initial.exists(key)) wp.initial.update(key, value);
  }
}

void validateWindow(const FrontendOutput& fe, FrameId begin, FrameId end) {
  if (fe.frames.empty() || begin > end || begin < 0 ||
      end >= static_cast<FrameId>(fe.frames.size())) {
    throw EmptyWindowError("invalid window [" + std::to_string(begin) + ", " +
                           std::to_string(end) + "]");
  }
  if (end - begin + 1 < 2) {
    throw EmptyWindowError("window needs at least 2 frames");
  }
}

}  // namespace

WindowProblem buildWcme(const FrontendOutput& fe, FrameId begin, FrameId end,
                        const BackendParams& params, const Values* warm_start) {
  validateWindow(fe, begin, end);
  WindowProblem wp;
  wp.begin = begin;
  wp.end = end;
  buildCommon(wp, fe, params);

  const NoiseModel motion_noise =
      NoiseModel::isotropic(3, params.motion_sigma).robust(params.huber_k);
  const NoiseModel smoothing_noise = NoiseModel::diagonal(smoothingSigmas(params));

  const WindowLayout layout = layoutWindow(fe, begin, end);
  for (const auto& [object, by_frame] : layout.pairs) {
    for (const auto& [k, pairs] : by_frame) {
      const VariableKey h_key = VariableKey::objectMotion(object, k);
      Pose3 init;  // identity unless the front-end produced a motion
      if (const auto it = fe.at(k).motions.find(object); it != fe.at(k).motions.end()) {
        init = it->second.motion;
      }
      wp.initial.insert(h_key, init);
      wp.motion_frames[object].push_back(k);
      for (const auto& pair : pairs) {
        wp.graph.emplace<TernaryMotionFactor>(h_key,
                                              VariableKey::dynamicPoint(pair.tracklet, k - 1),
                                              VariableKey::dynamicPoint(pair.tracklet, k),
                                              motion_noise);
      }
      if (by_frame.count(k - 1)) {
        wp.graph.emplace<MotionSmoothingFactor>(VariableKey::objectMotion(object, k - 1), h_key,
                                                smoothing_noise);
      }
    }
  }

  applyWarmStart(wp, warm_start);
  wp.graph.emplace<PosePriorFactor>(VariableKey::cameraPose(begin),
                                    wp.initial.atPose(VariableKey::cameraPose(begin)),
                                    NoiseModel::isotropic(6, params.camera_prior_sigma));
  return wp;
}

WindowProblem buildWcpe(const FrontendOutput& fe, FrameId begin, FrameId end,
                        const BackendParams& params, const Values* warm_start) {
  validateWindow(fe, begin, end);
  WindowProblem wp;
  wp.begin = begin;
  wp.end = end;
  buildCommon(wp, fe, params);

  const NoiseModel motion_noise =
      NoiseModel::isotropic(3, params.motion_sigma).robust(params.huber_k);
  const NoiseModel smoothing_noise = NoiseModel::diagonal(smoothingSigmas(params));

  const WindowLayout layout = layoutWindow(fe, begin, end);

  // Observed frames per object (any surviving measurement).
  std::map<ObjectId, std::vector<FrameId>> observed;
  for (FrameId k = begin; k <= end; ++k) {
    std::set<ObjectId> seen;
    for (const auto& m : fe.at(k).dynamic_inliers) seen.insert(m.object);
    for (ObjectId j : seen) observed[j].push_back(k);
  }

  for (const auto& [object, frames] : observed) {
    // Initialize the first pose from the anchor policy, then chain front-end
    // motions forward.
    const Pose3 anchor = anchorPose(params.anchor, object,
                                    layout.first_observations.at(object),
                                    fe.at(layout.first_frame.at(object)).camera_pose);
    std::map<FrameId, Pose3> inits;
    Pose3 current = anchor;
    FrameId prev_frame = -1;
    for (FrameId k : frames) {
      if (prev_frame >= 0) {
        Pose3 step;  // identity when the front-end had no motion for this frame
        if (const auto it = fe.at(k).motions.find(object); it != fe.at(k).motions.end()) {
          step = it->second.motion;
        }
        current = step * current;
      }
      inits[k] = current;
      prev_frame = k;
      wp.initial.insert(VariableKey::objectPose(object, k), current);
      wp.pose_frames[object].push_back(k);
    }

    const auto& pair_frames = layout.pairs.count(object)
                                  ? layout.pairs.at(object)
                                  : std::map<FrameId, std::vector<TrackPair>>{};
    for (const auto& [k, pairs] : pair_frames) {
      for (const auto& pair : pairs) {
        wp.graph.emplace<QuaternaryMotionFactor>(VariableKey::objectPose(object, k - 1),
                                                 VariableKey::objectPose(object, k),
                                                 VariableKey::dynamicPoint(pair.tracklet, k - 1),
                                                 VariableKey::dynamicPoint(pair.tracklet, k),
                                                 motion_noise);
      }
      if (pair_frames.count(k - 1)) {
        wp.graph.emplace<PoseSmoothingFactor>(VariableKey::objectPose(object, k - 2),
                                              VariableKey::objectPose(object, k - 1),
                                              VariableKey::objectPose(object, k),
                                              smoothing_noise);
      }
    }

    // Gauge prior on the start of every pose chain (no quaternary link back).
    for (FrameId k : frames) {
      const bool chain_start = !pair_frames.count(k);
      if (chain_start) {
        if (frames.size() == 1) {
          wp.warnings.push_back("object " + std::to_string(object) + " pose at frame " +
                                std::to_string(k) + " observed once; held by prior only");
        }
      }
    }
  }

  applyWarmStart(wp, warm_start);
  wp.graph.emplace<PosePriorFactor>(VariableKey::cameraPose(begin),
                                    wp.initial.atPose(VariableKey::cameraPose(begin)),
                                    NoiseModel::isotropic(6, params.camera_prior_sigma));

  // Chain-start priors target the post-warm-start initial values.
  const NoiseModel pose_prior_noise = NoiseModel::isotropic(6, params.object_pose_prior_sigma);
  for (const auto& [object, frames] : observed) {
    const auto& pair_frames = layout.pairs.count(object)
                                  ? layout.pairs.at(object)
                                  : std::map<FrameId, std::vector<TrackPair>>{};
    for (FrameId k : frames) {
      if (!pair_frames.count(k)) {
        const VariableKey key = VariableKey::objectPose(object, k);
        wp.graph.emplace<PosePriorFactor>(key, wp.initial.atPose(key), pose_prior_noise);
      }
    }
  }
  return wp;
}

std::map<FrameId, Pose3> recoverObjectPoses(const std::map<FrameId, Pose3>& motions,
                                            FrameId anchor_frame, const Pose3& anchor_pose) {
  std::map<FrameId, Pose3> poses;
  poses[anchor_frame] = anchor_pose;
  Pose3 current = anchor_pose;
  FrameId expected = anchor_frame + 1;
  for (const auto& [k, h] : motions) {
    if (k <= anchor_frame) continue;
    if (k != expected) {
      throw GapInMotionChainError("motion chain gap before frame " + std::to_string(k));
    }
    current = h * current;
    poses[k] = current;
    ++expected;
  }
  return poses;
}

namespace {

struct StitchedState {
  std::map<FrameId, Pose3> camera;
  std::map<ObjectId, std::map<FrameId, Pose3>> motions;  // WCME
  std::map<ObjectId, std::map<FrameId, Pose3>> poses;    // WCPE
  std::map<TrackletId, Point3> static_points;
  std::map<ObjectId, std::map<FrameId, std::map<TrackletId, Point3>>> points;
  std::set<std::pair<TrackletId, FrameId>> flagged;
};

// A point measurement whose whitened residual stays far beyond the Huber
// threshold at the solution was rejected by the kernel, not explained by it.
void flagRobustOutliers(StitchedState& state, const WindowProblem& wp, const Values& solved,
                        double huber_k) {
  for (const auto& [tracklet, frame, index] : wp.measurement_factors) {
    const Factor& factor = wp.graph.at(index);
    const double norm = factor.noiseModel().whiten(factor.evaluate(solved, nullptr)).norm();
    if (norm > 4.0 * huber_k) state.flagged.insert({tracklet, frame});
  }
}

void stitchWindow(StitchedState& state, const WindowProblem& wp, const Values& solved,
                  const FrontendOutput& fe) {
  for (FrameId k = wp.begin; k <= wp.end; ++k) {
    state.camera[k] = solved.atPose(VariableKey::cameraPose(k));
    for (const auto& m : fe.at(k).static_inliers) {
      state.static_points[m.tracklet] = solved.atPoint(VariableKey::staticPoint(m.tracklet));
    }
    for (const auto& m : fe.at(k).dynamic_inliers) {
      state.points[m.object][k][m.tracklet] =
          solved.atPoint(VariableKey::dynamicPoint(m.tracklet, k));
    }
  }
  for (const auto& [object, frames] : wp.motion_frames) {
    for (FrameId k : frames) {
      state.motions[object][k] = solved.atPose(VariableKey::objectMotion(object, k));
    }
  }
  for (const auto& [object, frames] : wp.pose_frames) {
    for (FrameId k : frames) {
      state.poses[object][k] = solved.atPose(VariableKey::objectPose(object, k));
    }
  }
}

// First observation set of an object over the full front-end output.
std::pair<FrameId, std::vector<const TrackedMeasurement*>> firstObservation(
    const FrontendOutput& fe, ObjectId object) {
  for (const auto& frame : fe.frames) {
    std::vector<const TrackedMeasurement*> obs;
    for (const auto& m : frame.dynamic_inliers) {
      if (m.object == object) obs.push_back(&m);
    }
    if (!obs.empty()) return {frame.frame, obs};
  }
  throw BrokenTrackError("object " + std::to_string(object) + " never observed");
}

EstimatorOutput harmonize(FormulationKind kind, const FrontendOutput& fe,
                          const StitchedState& state, const BackendParams& params) {
  EstimatorOutput out;
  out.kind = kind;
  out.camera_poses.reserve(state.camera.size());
  for (const auto& [k, pose] : state.camera) out.camera_poses.push_back(pose);
  out.static_points = state.static_points;

  if (kind == FormulationKind::WCME) {
    for (const auto& [object, motions] : state.motions) {
      ObjectEstimate est;
      est.motions = motions;
      // Recover the pose trajectory per contiguous motion segment; each segment
      // re-anchors per policy at its first frame.
      auto it = motions.begin();
      while (it != motions.end()) {
        const FrameId seg_anchor = it->first - 1;
        std::map<FrameId, Pose3> segment;
        FrameId k = it->first;
        while (it != motions.end() && it->first == k) {
          segment[it->first] = it->second;
          ++it;
          ++k;
        }
        const auto [first_frame, obs] = firstObservation(fe, object);
        Pose3 anchor;
        if (seg_anchor == first_frame || params.anchor.kind == AnchorPolicy::Kind::Provided) {
          anchor = anchorPose(params.anchor, object, obs, state.camera.at(first_frame));
        } else {
          // Re-anchor a post-gap segment at the centroid of its first frame.
          std::vector<const TrackedMeasurement*> seg_obs;
          for (const auto& m : fe.at(seg_anchor).dynamic_inliers) {
            if (m.object == object) seg_obs.push_back(&m);
          }
          anchor = centroidAnchor(seg_obs, state.camera.at(seg_anchor));
        }
        for (const auto& [frame, pose] : recoverObjectPoses(segment, seg_anchor, anchor)) {
          est.poses[frame] = pose;
        }
      }
      est.first_frame = est.poses.empty() ? 0 : est.poses.begin()->first;
      est.points = state.points.count(object) ? state.points.at(object)
                                              : decltype(est.points){};
      out.objects.emplace(object, std::move(est));
    }
  } else {
    for (const auto& [object, poses] : state.poses) {
      ObjectEstimate est;
      est.poses = poses;
      est.first_frame = poses.begin()->first;
      for (const auto& [k, pose] : poses) {
        const auto prev = poses.find(k - 1);
        if (prev != poses.end()) {
          est.motions[k] = pose * prev->second.inverse();
        }
      }
      est.points = state.points.count(object) ? state.points.at(object)
                                              : decltype(est.points){};
      out.objects.emplace(object, std::move(est));
    }
  }
  return out;
}

}  // namespace

EstimatorOutput runSlidingWindow(FormulationKind kind, const FrontendOutput& fe, int window,
                                 int overlap, const BackendParams& params) {
  const FrameId n_frames = static_cast<FrameId>(fe.frames.size());
  if (n_frames < 2) throw EmptyWindowError("need at least 2 frames");
  if (window < 2) throw ConfigError("window size must be >= 2");
  if (overlap < 1 || overlap >= window) throw ConfigError("overlap must be in [1, window)");

  StitchedState state;
  std::vector<SolveStats> stats;
  std::vector<std::pair<FrameId, FrameId>> windows;
  std::vector<std::string> warnings;

  Values carry;
  FrameId begin = 0;
  while (true) {
    const FrameId end = std::min<FrameId>(begin + window - 1, n_frames - 1);
    WindowProblem wp = kind == FormulationKind::WCME
                           ? buildWcme(fe, begin, end, params, begin == 0 ? nullptr : &carry)
                           : buildWcpe(fe, begin, end, params, begin == 0 ? nullptr : &carry);
    SolveResult solved = optimize(wp.graph, wp.initial, params.solver);
    stitchWindow(state, wp, solved.values, fe);
    flagRobustOutliers(state, wp, solved.values, params.huber_k);
    stats.push_back(solved.stats);
    windows.emplace_back(begin, end);
    warnings.insert(warnings.end(), wp.warnings.begin(), wp.warnings.end());
    carry = std::move(solved.values);
    if (end >= n_frames - 1) break;
    begin = end - overlap + 1;
  }

  EstimatorOutput out = harmonize(kind, fe, state, params);
  out.flagged_outliers = std::move(state.flagged);
  out.window_stats = std::move(stats);
  out.windows = std::move(windows);
  out.warnings = std::move(warnings);
  return out;
}

EstimatorOutput runBatch(FormulationKind kind, const FrontendOutput& fe,
                         const BackendParams& params) {
  return runSlidingWindow(kind, fe, static_cast<int>(fe.frames.size()),
                          std::max(1, static_cast<int>(fe.frames.size()) - 1), params);
}

}  // namespace motslam
