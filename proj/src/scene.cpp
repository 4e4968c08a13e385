#include "motslam/scene.hpp"

#include <algorithm>
#include <random>
#include <set>

namespace motslam {

void NoiseSpec::validate() const {
  if (pixel_sigma < 0.0 || depth_sigma < 0.0 || flow_sigma < 0.0) {
    throw ConfigError("noise sigmas must be non-negative");
  }
  if (outlier_rate < 0.0 || outlier_rate >= 1.0) {
    throw ConfigError("outlier_rate must be in [0, 1)");
  }
}

void SceneConfig::validate() const {
  if (frames <= 0) throw ConfigError("scene needs at least one frame");
  if (static_points < 0) throw ConfigError("negative static point count");
  if ((static_box_max - static_box_min).minCoeff() <= 0.0) {
    throw ConfigError("static box must have positive extent");
  }
  std::set<ObjectId> ids;
  for (const auto& obj : objects) {
    if (obj.id == kStaticObjectId) throw ConfigError("object id 0 is reserved for static");
    if (!ids.insert(obj.id).second) throw ConfigError("duplicate object id");
    if (obj.num_points <= 0) throw ConfigError("object point cloud is empty");
    const FrameId last = obj.last_frame < 0 ? frames - 1 : obj.last_frame;
    if (obj.first_frame < 0 || last >= frames || last < obj.first_frame) {
      throw ConfigError("object window outside sequence");
    }
    if (last - obj.first_frame + 1 < 3) {
      throw ConfigError("object window shorter than 3 frames");
    }
    for (const auto& [a, b] : obj.occlusions) {
      if (a > b) throw ConfigError("bad occlusion interval");
    }
  }
  noise.validate();
}

bool GtObject::occludedAt(FrameId k) const {
  return std::any_of(occlusions.begin(), occlusions.end(),
                     [k](const auto& iv) { return k >= iv.first && k <= iv.second; });
}

std::vector<const TrackedMeasurement*> FrameMeasurements::staticSet() const {
  std::vector<const TrackedMeasurement*> out;
  for (const auto& m : measurements) {
    if (m.isStatic()) out.push_back(&m);
  }
  return out;
}

std::vector<const TrackedMeasurement*> FrameMeasurements::objectSet(ObjectId j) const {
  std::vector<const TrackedMeasurement*> out;
  for (const auto& m : measurements) {
    if (m.object == j) out.push_back(&m);
  }
  return out;
}

std::vector<ObjectId> FrameMeasurements::observedObjects() const {
  std::set<ObjectId> ids;
  for (const auto& m : measurements) {
    if (!m.isStatic()) ids.insert(m.object);
  }
  return {ids.begin(), ids.end()};
}

const TrackedMeasurement* FrameMeasurements::find(TrackletId tracklet) const {
  for (const auto& m : measurements) {
    if (m.tracklet == tracklet) return &m;
  }
  return nullptr;
}

namespace {

Twist scriptTwist(const ObjectConfig& obj, FrameId from_frame, Twist& walk_state,
                  std::mt19937_64& rng) {
  switch (obj.motion) {
    case MotionScriptKind::Constant:
      return obj.twist;
    case MotionScriptKind::Piecewise: {
      Twist active = obj.twist;
      for (const auto& [start, xi] : obj.piecewise) {
        if (start <= from_frame) active = xi;
      }
      return active;
    }
    case MotionScriptKind::Sampled: {
      std::normal_distribution<double> rot(0.0, obj.sampled_rot_step);
      std::normal_distribution<double> trans(0.0, obj.sampled_trans_step);
      for (int i = 0; i < 3; ++i) walk_state.angular[i] += rot(rng);
      for (int i = 0; i < 3; ++i) walk_state.linear[i] += trans(rng);
      return walk_state;
    }
  }
  return obj.twist;
}

}  // namespace

GroundTruthScene generateScene(const SceneConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);

  GroundTruthScene scene;
  scene.camera_trajectory.reserve(config.frames);
  Pose3 cam = Pose3::identity();  // world frame anchored at the first camera pose
  const Pose3 cam_step = Pose3::exp(config.camera_twist);
  for (FrameId k = 0; k < config.frames; ++k) {
    scene.camera_trajectory.push_back(cam);
    cam = cam * cam_step;
  }

  TrackletId next_tracklet = 1;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < config.static_points; ++i) {
    Point3 p;
    for (int a = 0; a < 3; ++a) {
      p[a] = config.static_box_min[a] +
             (config.static_box_max[a] - config.static_box_min[a]) * unit(rng);
    }
    scene.static_points.push_back(p);
    scene.static_tracklets.push_back(next_tracklet++);
  }

  for (const auto& obj_cfg : config.objects) {
    GtObject obj;
    obj.id = obj_cfg.id;
    obj.first_frame = obj_cfg.first_frame;
    obj.last_frame = obj_cfg.last_frame < 0 ? config.frames - 1 : obj_cfg.last_frame;
    obj.occlusions = obj_cfg.occlusions;

    std::uniform_real_distribution<double> box(-obj_cfg.half_extent, obj_cfg.half_extent);
    obj.body_points.reserve(obj_cfg.num_points);
    for (int i = 0; i < obj_cfg.num_points; ++i) {
      obj.body_points.emplace_back(box(rng), box(rng), box(rng));
    }
    // Body frame convention: centroid origin, identity orientation at first sight.
    Point3 centroid = Point3::Zero();
    for (const auto& p : obj.body_points) centroid += p;
    centroid /= static_cast<double>(obj.body_points.size());
    for (auto& p : obj.body_points) p -= centroid;
    for (int i = 0; i < obj_cfg.num_points; ++i) obj.tracklets.push_back(next_tracklet++);

    Pose3 pose(Eigen::Quaterniond::Identity(), obj_cfg.center);
    obj.poses.push_back(pose);
    Twist walk = obj_cfg.twist;
    for (FrameId k = obj.first_frame + 1; k <= obj.last_frame; ++k) {
      pose = pose * Pose3::exp(scriptTwist(obj_cfg, k - 1, walk, rng));
      obj.poses.push_back(pose);
    }
    scene.objects.emplace(obj.id, std::move(obj));
  }
  return scene;
}

namespace {

struct NoiseChannels {
  std::mt19937_64 rng;
  std::normal_distribution<double> pixel;
  std::normal_distribution<double> depth;
  std::normal_distribution<double> flow;
  std::uniform_real_distribution<double> unit{0.0, 1.0};

  NoiseChannels(const NoiseSpec& spec, std::uint64_t seed)
      : rng(seed ^ 0x5eedf00dULL), pixel(0.0, spec.pixel_sigma > 0 ? spec.pixel_sigma : 1.0),
        depth(0.0, spec.depth_sigma > 0 ? spec.depth_sigma : 1.0),
        flow(0.0, spec.flow_sigma > 0 ? spec.flow_sigma : 1.0) {}
};

std::optional<TrackedMeasurement> makeMeasurement(const CameraModel& cam, const Pose3& x_k,
                                                  const Point3& world, FrameId k,
                                                  TrackletId tracklet, ObjectId object,
                                                  const NoiseSpec& noise, NoiseChannels& ch) {
  const Point3 local_true = x_k.inverse() * world;
  if (local_true.z() <= 0.0) return std::nullopt;  // behind camera
  const PixelDepth proj = cam.projectLocal(local_true);
  if (!cam.inImage(proj.pixel) || !cam.inDepthRange(proj.depth)) return std::nullopt;

  TrackedMeasurement m;
  m.frame = k;
  m.tracklet = tracklet;
  m.object = object;
  m.pixel = proj.pixel;
  m.depth = proj.depth;
  if (noise.outlier_rate > 0.0 && ch.unit(ch.rng) < noise.outlier_rate) {
    m.pixel = Vector2(ch.unit(ch.rng) * (cam.width() - 1), ch.unit(ch.rng) * (cam.height() - 1));
    m.depth = cam.depthMin() + ch.unit(ch.rng) * (cam.depthMax() - cam.depthMin());
    m.injected_outlier = true;
  } else {
    if (noise.pixel_sigma > 0.0) {
      m.pixel += Vector2(ch.pixel(ch.rng), ch.pixel(ch.rng));
    }
    if (noise.depth_sigma > 0.0) {
      m.depth += ch.depth(ch.rng);
      if (m.depth <= 0.0) m.depth = 1e-3;
    }
  }
  m.local = cam.backProject(m.pixel, m.depth);
  return m;
}

}  // namespace

MeasurementSet simulateMeasurements(const GroundTruthScene& scene, const CameraModel& cam,
                                    const NoiseSpec& noise, std::uint64_t seed) {
  noise.validate();
  NoiseChannels ch(noise, seed);

  MeasurementSet set;
  set.applied = noise;
  set.frames.resize(scene.frames());

  for (FrameId k = 0; k < scene.frames(); ++k) {
    auto& frame = set.frames[k];
    frame.frame = k;
    const Pose3& x_k = scene.camera_trajectory[k];

    for (std::size_t i = 0; i < scene.static_points.size(); ++i) {
      if (auto m = makeMeasurement(cam, x_k, scene.static_points[i], k, scene.static_tracklets[i],
                                   kStaticObjectId, noise, ch)) {
        frame.measurements.push_back(std::move(*m));
      }
    }
    for (const auto& [id, obj] : scene.objects) {
      if (!obj.observedAt(k)) continue;
      for (std::size_t i = 0; i < obj.body_points.size(); ++i) {
        if (auto m = makeMeasurement(cam, x_k, obj.worldPoint(i, k), k, obj.tracklets[i], id,
                                     noise, ch)) {
          frame.measurements.push_back(std::move(*m));
        }
      }
    }

    // Measured flow between tracked pixels, with its own noise channel.
    if (k > 0) {
      const auto& prev = set.frames[k - 1];
      for (auto& m : frame.measurements) {
        if (const TrackedMeasurement* p = prev.find(m.tracklet)) {
          Vector2 f = m.pixel - p->pixel;
          if (noise.flow_sigma > 0.0) f += Vector2(ch.flow(ch.rng), ch.flow(ch.rng));
          m.flow = f;
        }
      }
    }
  }
  return set;
}

Dataset makeDataset(const SceneConfig& config) {
  Dataset data;
  data.config = config;
  data.scene = generateScene(config);
  data.measurements = simulateMeasurements(data.scene, config.camera, config.noise, config.seed);
  return data;
}

}  // namespace motslam
