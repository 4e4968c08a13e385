#include "motslam/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <Eigen/SVD>

namespace motslam {

namespace {

constexpr int kMinimalSetSize = 6;

std::uint64_t mixSeed(std::uint64_t seed, FrameId frame, ObjectId object) {
  std::uint64_t h = seed ^ 0x9e3779b97f4a7c15ULL;
  h ^= static_cast<std::uint64_t>(frame) * 0xbf58476d1ce4e5b9ULL;
  h ^= static_cast<std::uint64_t>(object + 1) * 0x94d049bb133111ebULL;
  h ^= h >> 31;
  return h;
}

void checkNotCollinear(const std::vector<Point3>& points) {
  Vector3 mean = Vector3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Eigen::MatrixXd centered(points.size(), 3);
  for (std::size_t i = 0; i < points.size(); ++i) centered.row(i) = (points[i] - mean).transpose();
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered);
  const auto& sv = svd.singularValues();
  if (sv[0] < 1e-12 || sv[1] < 1e-9 * sv[0]) {
    throw DegenerateGeometryError("correspondence points are collinear");
  }
}

// Pose-only LM solve of r_i = z_i - pi(P^{-1} m_i) over the given index subset.
std::optional<Pose3> solvePoseOnly(const std::vector<Point3>& points,
                                   const std::vector<Vector2>& pixels,
                                   const std::vector<int>& subset, const CameraModel& cam,
                                   const Pose3& seed_pose, int max_iterations,
                                   std::optional<double> huber_k = std::nullopt) {
  const VariableKey key = VariableKey::cameraPose(0);
  NoiseModel noise = NoiseModel::isotropic(2, 1.0);
  if (huber_k) noise = noise.robust(*huber_k);
  FactorGraph graph;
  for (int idx : subset) {
    graph.emplace<FixedPointProjectionFactor>(key, points[idx], pixels[idx], cam, noise);
  }
  Values initial;
  initial.insert(key, seed_pose);
  SolverConfig cfg;
  cfg.max_iterations = max_iterations;
  cfg.relative_cost_tol = 1e-12;
  try {
    return optimize(graph, initial, cfg).values.atPose(key);
  } catch (const BehindCameraError&) {
    return std::nullopt;  // seed projects a sampled point behind the camera
  } catch (const SingularSystemError&) {
    return std::nullopt;
  }
}

double reprojectionError(const Pose3& pose, const Point3& m, const Vector2& z,
                         const CameraModel& cam) {
  const Point3 local = pose.inverse() * m;
  if (local.z() <= 0.0) return std::numeric_limits<double>::infinity();
  return (z - cam.projectLocal(local).pixel).norm();
}

struct Score {
  int inliers = -1;
  double rms = std::numeric_limits<double>::infinity();
};

Score scoreModel(const Pose3& pose, const std::vector<Point3>& points,
                 const std::vector<Vector2>& pixels, const CameraModel& cam, double threshold,
                 std::vector<bool>* mask) {
  Score s;
  s.inliers = 0;
  double sum2 = 0.0;
  if (mask) mask->assign(points.size(), false);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double e = reprojectionError(pose, points[i], pixels[i], cam);
    if (e < threshold) {
      ++s.inliers;
      sum2 += e * e;
      if (mask) (*mask)[i] = true;
    }
  }
  s.rms = s.inliers > 0 ? std::sqrt(sum2 / s.inliers) : std::numeric_limits<double>::infinity();
  return s;
}

bool betterScore(const Score& a, const Score& b) {
  return a.inliers > b.inliers || (a.inliers == b.inliers && a.rms < b.rms);
}

// Re-fit on the consensus set and re-gate until the consensus stops growing.
void refineConsensus(const std::vector<Point3>& points, const std::vector<Vector2>& pixels,
                     const CameraModel& cam, double threshold, Pose3* pose,
                     std::vector<bool>* mask, Score* score) {
  for (int round = 0; round < 4; ++round) {
    std::vector<int> inlier_idx;
    for (std::size_t i = 0; i < mask->size(); ++i) {
      if ((*mask)[i]) inlier_idx.push_back(static_cast<int>(i));
    }
    if (inlier_idx.size() < static_cast<std::size_t>(kMinimalSetSize)) return;
    const auto polished = solvePoseOnly(points, pixels, inlier_idx, cam, *pose, 30);
    if (!polished) return;
    std::vector<bool> new_mask;
    const Score s = scoreModel(*polished, points, pixels, cam, threshold, &new_mask);
    if (!betterScore(s, *score)) return;
    *pose = *polished;
    *mask = std::move(new_mask);
    *score = s;
  }
}

}  // namespace

PnpResult ransacPnp(const std::vector<Point3>& world_points, const std::vector<Vector2>& pixels,
                    const CameraModel& cam, const Pose3& seed_pose, const FrontendParams& params,
                    std::mt19937_64& rng) {
  const std::size_t n = world_points.size();
  if (world_points.size() != pixels.size()) {
    throw LengthMismatchError("PnP points/pixels size mismatch");
  }
  if (n < static_cast<std::size_t>(params.min_correspondences)) {
    throw InsufficientCorrespondencesError(n, params.min_correspondences);
  }
  checkNotCollinear(world_points);

  std::vector<int> indices(n);
  for (std::size_t i = 0; i < n; ++i) indices[i] = static_cast<int>(i);

  PnpResult best;
  Score best_score;

  // Seed hypothesis: a Huber-robust fit over all correspondences from the
  // motion-model seed. Keeps tracking alive when minimal sampling starves.
  if (const auto seeded =
          solvePoseOnly(world_points, pixels, indices, cam, seed_pose, 30, params.huber_k)) {
    std::vector<bool> mask;
    const Score s = scoreModel(*seeded, world_points, pixels, cam,
                               params.ransac_inlier_threshold_px, &mask);
    if (s.inliers >= kMinimalSetSize) {
      best_score = s;
      best.pose = *seeded;
      best.inlier_mask = std::move(mask);
    }
  }

  int required = params.ransac_max_iterations;
  int iter = 0;
  for (; iter < required; ++iter) {
    // Partial Fisher-Yates draw of a minimal subset.
    for (int i = 0; i < kMinimalSetSize; ++i) {
      std::uniform_int_distribution<int> pick(i, static_cast<int>(n) - 1);
      std::swap(indices[i], indices[pick(rng)]);
    }
    const std::vector<int> subset(indices.begin(), indices.begin() + kMinimalSetSize);
    const auto model = solvePoseOnly(world_points, pixels, subset, cam, seed_pose, 15);
    if (!model) continue;

    std::vector<bool> mask;
    const Score s = scoreModel(*model, world_points, pixels, cam,
                               params.ransac_inlier_threshold_px, &mask);
    // Tie-break equal inlier counts by lower inlier RMS, for determinism.
    if (betterScore(s, best_score)) {
      best_score = s;
      best.pose = *model;
      best.inlier_mask = std::move(mask);
      const double w = static_cast<double>(s.inliers) / static_cast<double>(n);
      const double p_all = std::pow(w, kMinimalSetSize);
      if (p_all > 1.0 - 1e-12) {
        required = iter + 1;
      } else if (p_all > 1e-9) {
        const double needed =
            std::ceil(std::log(1.0 - params.ransac_confidence) / std::log(1.0 - p_all));
        required = static_cast<int>(std::min<double>(params.ransac_max_iterations,
                                                     std::max<double>(needed, iter + 1)));
      }
      // Tiny support: keep sampling up to the budget.
    }
  }
  if (best_score.inliers < kMinimalSetSize) {
    throw DegenerateGeometryError("RANSAC found no supported model");
  }

  // Iterated polish on the consensus set until it stops growing.
  refineConsensus(world_points, pixels, cam, params.ransac_inlier_threshold_px, &best.pose,
                  &best.inlier_mask, &best_score);
  best.inlier_rms_px = best_score.rms;
  best.iterations = iter;
  return best;
}

PnpResult estimateCameraPose(const std::vector<Point3>& map_points,
                             const std::vector<Vector2>& pixels, const CameraModel& cam,
                             const Pose3& prev_pose, const FrontendParams& params,
                             std::mt19937_64& rng) {
  return ransacPnp(map_points, pixels, cam, prev_pose, params, rng);
}

MotionEstimate estimateObjectMotion(const std::vector<Point3>& points_prev_world,
                                    const std::vector<Vector2>& pixels_curr, const Pose3& x_curr,
                                    const CameraModel& cam, const Pose3& motion_seed,
                                    const FrontendParams& params, std::mt19937_64& rng) {
  // r = z_k - pi(G m_{k-1}) has the PnP form with P = G^{-1}; H = X_k G.
  const Pose3 pnp_seed = motion_seed.inverse() * x_curr;
  const PnpResult pnp = ransacPnp(points_prev_world, pixels_curr, cam, pnp_seed, params, rng);
  MotionEstimate est;
  est.motion = x_curr * pnp.pose.inverse();
  est.inlier_mask = pnp.inlier_mask;
  est.inlier_rms_px = pnp.inlier_rms_px;
  return est;
}

FlowRefinementResult refineJointFlow(FlowStage stage,
                                     const std::vector<FlowRefinementInput>& tracks,
                                     const Pose3& initial_transform, const CameraModel& cam,
                                     const FrontendParams& params) {
  const bool invert = stage == FlowStage::Camera;
  const VariableKey pose_key = VariableKey::cameraPose(0);
  const NoiseModel flow_noise =
      NoiseModel::isotropic(2, params.flow_sigma_px).robust(params.huber_k);
  const NoiseModel prior_noise = NoiseModel::isotropic(2, params.flow_prior_sigma_px);

  FlowRefinementResult result;
  result.transform = initial_transform;

  std::vector<FlowRefinementInput> active;
  // Tracks whose initial projection is already invalid cannot be refined.
  for (const auto& t : tracks) {
    const Point3 local = invert ? initial_transform.inverse() * t.map_point
                                : initial_transform * t.map_point;
    if (local.z() <= 0.0) {
      result.outliers.push_back(t.tracklet);
    } else {
      active.push_back(t);
    }
  }

  for (int round = 0; round < 3 && !active.empty(); ++round) {
    FactorGraph graph;
    Values initial;
    initial.insert(pose_key, result.transform);
    for (const auto& t : active) {
      const VariableKey fk = VariableKey::flow(t.tracklet, 0);
      initial.insert(fk, t.flow);
      graph.emplace<FlowReprojectionFactor>(pose_key, fk, invert, t.map_point, t.pixel_prev, cam,
                                            flow_noise);
      graph.emplace<FlowPriorFactor>(fk, t.flow, prior_noise);
    }
    SolveResult solved;
    try {
      solved = optimize(graph, initial, SolverConfig{});
    } catch (const SingularSystemError&) {
      return result;
    }

    result.transform = solved.values.atPose(pose_key);
    result.flows.clear();
    std::vector<FlowRefinementInput> kept;
    bool removed = false;
    for (const auto& t : active) {
      const Vector2 flow = solved.values.atFlow(VariableKey::flow(t.tracklet, 0));
      const Vector2 r = flowReprojectionResidual(result.transform, invert, t.map_point,
                                                 t.pixel_prev, flow, cam);
      if (r.norm() > params.ransac_inlier_threshold_px) {
        result.outliers.push_back(t.tracklet);
        removed = true;
      } else {
        result.flows[t.tracklet] = flow;
        kept.push_back(t);
      }
    }
    active = std::move(kept);
    if (!removed) break;
  }
  return result;
}

MotionRefinementResult refineObjectMotion(ObjectId object, FrameId frame,
                                          const std::vector<MotionRefinementInput>& tracks,
                                          const Pose3& x_prev, const Pose3& x_curr,
                                          const Pose3& initial_motion, const CameraModel& cam,
                                          const FrontendParams& params) {
  const VariableKey xp = VariableKey::cameraPose(frame - 1);
  const VariableKey xc = VariableKey::cameraPose(frame);
  const VariableKey hk = VariableKey::objectMotion(object, frame);

  const NoiseModel prior_noise = NoiseModel::isotropic(6, params.camera_prior_sigma);
  const NoiseModel proj_noise =
      NoiseModel::isotropic(2, params.projection_sigma_px).robust(params.huber_k);
  const NoiseModel depth_noise =
      NoiseModel::isotropic(1, params.point3d_sigma_m).robust(params.huber_k);
  const NoiseModel motion_noise =
      NoiseModel::isotropic(3, params.motion3d_sigma_m).robust(params.huber_k);

  MotionRefinementResult result;
  result.motion = initial_motion;
  result.camera_prev = x_prev;
  result.camera_curr = x_curr;

  // Sanity pre-gate: pairs wildly inconsistent with the initial motion carry
  // corrupted depth on at least one side and would poison the graph.
  const double pre_gate = 30.0 * params.point3d_sigma_m;
  std::vector<MotionRefinementInput> active;
  for (const auto& t : tracks) {
    const Vector3 r = ternaryMotionResidual(initial_motion, x_prev * t.local_prev,
                                            x_curr * t.local_curr);
    if (r.norm() > pre_gate) {
      result.outliers.push_back(t.tracklet);
    } else {
      active.push_back(t);
    }
  }

  for (int round = 0; round < 3 && !active.empty(); ++round) {
    FactorGraph graph;
    Values values;
    values.insert(xp, x_prev);
    values.insert(xc, x_curr);
    values.insert(hk, result.motion);
    graph.emplace<PosePriorFactor>(xp, x_prev, prior_noise);
    graph.emplace<PosePriorFactor>(xc, x_curr, prior_noise);
    for (const auto& t : active) {
      const VariableKey mp = VariableKey::dynamicPoint(t.tracklet, frame - 1);
      const VariableKey mc = VariableKey::dynamicPoint(t.tracklet, frame);
      values.insert(mp, Vector3(x_prev * t.local_prev));
      values.insert(mc, Vector3(x_curr * t.local_curr));
      graph.emplace<ProjectionFactor>(xp, mp, t.pixel_prev, cam, proj_noise);
      graph.emplace<ProjectionFactor>(xc, mc, t.pixel_curr, cam, proj_noise);
      // Depth anchors: bearings from two views leave the motion's translation
      // scale free, so each point also carries its measured depth.
      graph.emplace<DepthFactor>(xp, mp, t.local_prev.z(), depth_noise);
      graph.emplace<DepthFactor>(xc, mc, t.local_curr.z(), depth_noise);
      graph.emplace<TernaryMotionFactor>(hk, mp, mc, motion_noise);
    }
    SolveResult solved;
    try {
      solved = optimize(graph, values, SolverConfig{});
    } catch (const SingularSystemError&) {
      return result;  // keep the last good estimate
    }
    result.motion = solved.values.atPose(hk);
    result.camera_prev = solved.values.atPose(xp);
    result.camera_curr = solved.values.atPose(xc);
    result.final_cost = solved.stats.final_cost;

    // 3-sigma Mahalanobis gate on the 3D motion residual.
    std::vector<MotionRefinementInput> kept;
    bool removed = false;
    const NoiseModel gate_noise = NoiseModel::isotropic(3, params.point3d_sigma_m);
    for (const auto& t : active) {
      const Vector3 m_prev = solved.values.atPoint(VariableKey::dynamicPoint(t.tracklet, frame - 1));
      const Vector3 m_curr = solved.values.atPoint(VariableKey::dynamicPoint(t.tracklet, frame));
      const double d = gate_noise.whiten(ternaryMotionResidual(result.motion, m_prev, m_curr)).norm();
      if (d > params.gate_sigma) {
        result.outliers.push_back(t.tracklet);
        removed = true;
      } else {
        kept.push_back(t);
      }
    }
    active = std::move(kept);
    if (!removed) break;
  }
  return result;
}

std::map<ObjectId, std::map<FrameId, Pose3>> FrontendOutput::motionsByObject() const {
  std::map<ObjectId, std::map<FrameId, Pose3>> out;
  for (const auto& f : frames) {
    for (const auto& [id, est] : f.motions) out[id][f.frame] = est.motion;
  }
  return out;
}

FrontendOutput Frontend::run(const MeasurementSet& measurements) const {
  FrontendOutput out;
  const FrameId n_frames = static_cast<FrameId>(measurements.frames.size());
  if (n_frames == 0) return out;
  out.frames.reserve(n_frames);

  // First frame anchors the world; every measurement passes through unverified.
  {
    FrontendFrame f0;
    f0.frame = 0;
    f0.camera_pose = Pose3::identity();
    for (const auto& m : measurements.frames[0].measurements) {
      (m.isStatic() ? f0.static_inliers : f0.dynamic_inliers).push_back(m);
    }
    out.frames.push_back(std::move(f0));
  }

  for (FrameId k = 1; k < n_frames; ++k) {
    const FrontendFrame& prev = out.frames.back();
    const FrameMeasurements& curr_meas = measurements.frames[k];
    FrontendFrame frame;
    frame.frame = k;

    std::map<TrackletId, const TrackedMeasurement*> prev_static;
    for (const auto& m : prev.static_inliers) prev_static.emplace(m.tracklet, &m);
    std::map<TrackletId, const TrackedMeasurement*> prev_dynamic;
    for (const auto& m : prev.dynamic_inliers) prev_dynamic.emplace(m.tracklet, &m);

    std::set<TrackletId> rejected;  // at frame k

    // --- Camera pose: PnP on the static local map from k-1.
    std::vector<Point3> map_points;
    std::vector<Vector2> pixels;
    std::vector<const TrackedMeasurement*> tracked;
    for (const auto& m : curr_meas.measurements) {
      if (!m.isStatic()) continue;
      const auto it = prev_static.find(m.tracklet);
      if (it == prev_static.end()) continue;
      map_points.push_back(prev.camera_pose * it->second->local);
      pixels.push_back(m.pixel);
      tracked.push_back(&m);
    }
    std::mt19937_64 rng_static(mixSeed(params_.seed, k, kStaticObjectId));
    std::optional<PnpResult> pnp;
    try {
      pnp = estimateCameraPose(map_points, pixels, cam_, prev.camera_pose, params_, rng_static);
    } catch (const DegenerateGeometryError&) {
      // Tracking hole: carry the previous pose and keep everything unverified.
    } catch (const InsufficientCorrespondencesError&) {
    }
    frame.camera_pose = pnp ? pnp->pose : prev.camera_pose;
    if (pnp) {
      for (std::size_t i = 0; i < tracked.size(); ++i) {
        if (!pnp->inlier_mask[i]) rejected.insert(tracked[i]->tracklet);
      }
    }

    // --- Joint optical-flow refinement of the camera pose.
    if (pnp && params_.refine_flow) {
      std::vector<FlowRefinementInput> flow_tracks;
      for (std::size_t i = 0; i < tracked.size(); ++i) {
        if (!pnp->inlier_mask[i] || !tracked[i]->flow) continue;
        flow_tracks.push_back({tracked[i]->tracklet, map_points[i],
                               prev_static.at(tracked[i]->tracklet)->pixel, *tracked[i]->flow});
      }
      if (flow_tracks.size() >= static_cast<std::size_t>(params_.min_correspondences)) {
        const FlowRefinementResult refined =
            refineJointFlow(FlowStage::Camera, flow_tracks, frame.camera_pose, cam_, params_);
        frame.camera_pose = refined.transform;
        for (TrackletId t : refined.outliers) rejected.insert(t);
      }
    }

    std::vector<TrackletId> retro_static, retro_dynamic;
    for (const auto* m : tracked) {
      if (rejected.count(m->tracklet)) {
        // Failed pair with an unvetted predecessor: the fault may sit at k-1.
        if (!prev.verified.count(m->tracklet)) retro_static.push_back(m->tracklet);
      } else if (pnp) {
        frame.verified.insert(m->tracklet);
      }
    }

    for (const auto& m : curr_meas.measurements) {
      if (!m.isStatic()) continue;
      if (rejected.count(m.tracklet)) {
        ++frame.static_outliers;
        out.flagged_outliers.insert({m.tracklet, k});
      } else {
        frame.static_inliers.push_back(m);
      }
    }

    // --- Per-object motion estimation; objects are independent problems.
    for (ObjectId j : curr_meas.observedObjects()) {
      std::vector<const TrackedMeasurement*> pairs_curr;
      std::vector<const TrackedMeasurement*> pairs_prev;
      for (const auto& m : curr_meas.measurements) {
        if (m.object != j) continue;
        const auto it = prev_dynamic.find(m.tracklet);
        if (it == prev_dynamic.end() || it->second->object != j) continue;
        pairs_curr.push_back(&m);
        pairs_prev.push_back(it->second);
      }

      std::set<TrackletId> obj_rejected;
      std::optional<ObjectFrameEstimate> estimate;
      if (pairs_curr.size() >= static_cast<std::size_t>(params_.min_correspondences)) {
        std::vector<Point3> prev_world;
        std::vector<Vector2> curr_pixels;
        prev_world.reserve(pairs_curr.size());
        for (std::size_t i = 0; i < pairs_curr.size(); ++i) {
          prev_world.push_back(prev.camera_pose * pairs_prev[i]->local);
          curr_pixels.push_back(pairs_curr[i]->pixel);
        }

        Pose3 seed;  // identity motion unless the object carried one at k-1
        if (const auto it = prev.motions.find(j); it != prev.motions.end()) {
          seed = it->second.motion;
        }
        std::mt19937_64 rng_obj(mixSeed(params_.seed, k, j));
        try {
          const MotionEstimate pnp_est = estimateObjectMotion(
              prev_world, curr_pixels, frame.camera_pose, cam_, seed, params_, rng_obj);
          Pose3 motion = pnp_est.motion;
          for (std::size_t i = 0; i < pairs_curr.size(); ++i) {
            if (!pnp_est.inlier_mask[i]) obj_rejected.insert(pairs_curr[i]->tracklet);
          }

          if (params_.refine_flow) {
            std::vector<FlowRefinementInput> flow_tracks;
            for (std::size_t i = 0; i < pairs_curr.size(); ++i) {
              if (!pnp_est.inlier_mask[i] || !pairs_curr[i]->flow) continue;
              flow_tracks.push_back({pairs_curr[i]->tracklet, prev_world[i],
                                     pairs_prev[i]->pixel, *pairs_curr[i]->flow});
            }
            if (flow_tracks.size() >= static_cast<std::size_t>(params_.min_correspondences)) {
              const Pose3 g = frame.camera_pose.inverse() * motion;
              const FlowRefinementResult refined =
                  refineJointFlow(FlowStage::Object, flow_tracks, g, cam_, params_);
              motion = frame.camera_pose * refined.transform;
              for (TrackletId t : refined.outliers) obj_rejected.insert(t);
            }
          }

          if (params_.refine_motion) {
            std::vector<MotionRefinementInput> mtracks;
            for (std::size_t i = 0; i < pairs_curr.size(); ++i) {
              if (obj_rejected.count(pairs_curr[i]->tracklet)) continue;
              mtracks.push_back({pairs_curr[i]->tracklet, pairs_prev[i]->pixel,
                                 pairs_curr[i]->pixel, pairs_prev[i]->local,
                                 pairs_curr[i]->local});
            }
            if (mtracks.size() >= static_cast<std::size_t>(params_.min_correspondences)) {
              const MotionRefinementResult refined =
                  refineObjectMotion(j, k, mtracks, prev.camera_pose, frame.camera_pose, motion,
                                     cam_, params_);
              motion = refined.motion;
              for (TrackletId t : refined.outliers) obj_rejected.insert(t);
            }
          }

          ObjectFrameEstimate est;
          est.motion = motion;
          est.outlier_count = static_cast<int>(obj_rejected.size());
          est.inlier_count = static_cast<int>(pairs_curr.size()) - est.outlier_count;
          estimate = est;
        } catch (const DegenerateGeometryError&) {
          // No supported model; keep the object's measurements but report no motion.
        }
      }

      if (estimate) frame.motions.emplace(j, *estimate);
      for (const auto& m : curr_meas.measurements) {
        if (m.object != j) continue;
        if (obj_rejected.count(m.tracklet)) {
          ++frame.dynamic_outliers;
          out.flagged_outliers.insert({m.tracklet, k});
        } else {
          frame.dynamic_inliers.push_back(m);
        }
      }
    }

    out.frames.push_back(std::move(frame));
  }
  return out;
}

}  // namespace motslam
