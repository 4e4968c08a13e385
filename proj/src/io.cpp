#include "motslam/io.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace motslam {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> splitList(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

std::string fmtDouble(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parseString(ss.str());
}

KeyValueFile KeyValueFile::parseString(const std::string& text) {
  KeyValueFile kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    kv.entries_[key] = value;
  }
  return kv;
}

std::string KeyValueFile::getString(const std::string& key, const std::string& fallback) const {
  const auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

double KeyValueFile::getDouble(const std::string& key, double fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' is not a number: " + it->second);
  }
}

int KeyValueFile::getInt(const std::string& key, int fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "' is not an integer: " + it->second);
  }
}

bool KeyValueFile::getBool(const std::string& key, bool fallback) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  if (it->second == "true" || it->second == "1") return true;
  if (it->second == "false" || it->second == "0") return false;
  throw ConfigError("key '" + key + "' is not a bool: " + it->second);
}

std::vector<double> KeyValueFile::getDoubles(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) return {};
  std::vector<double> out;
  for (const auto& item : splitList(it->second)) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "' has a non-numeric entry: " + item);
    }
  }
  return out;
}

std::map<std::string, std::string> KeyValueFile::section(const std::string& prefix) const {
  std::map<std::string, std::string> out;
  const std::string p = prefix + ".";
  for (const auto& [key, value] : entries_) {
    if (key.rfind(p, 0) == 0) out.emplace(key.substr(p.size()), value);
  }
  return out;
}

namespace {

Twist twistFromList(const std::vector<double>& v, const std::string& key) {
  if (v.size() != 6) throw ConfigError("key '" + key + "' must list 6 values (wx wy wz vx vy vz)");
  return {Vector3(v[0], v[1], v[2]), Vector3(v[3], v[4], v[5])};
}

Vector3 vec3FromList(const std::vector<double>& v, const std::string& key) {
  if (v.size() != 3) throw ConfigError("key '" + key + "' must list 3 values");
  return {v[0], v[1], v[2]};
}

std::vector<std::pair<FrameId, FrameId>> parseIntervals(const std::string& text) {
  std::vector<std::pair<FrameId, FrameId>> out;
  for (const auto& item : splitList(text)) {
    const auto dots = item.find("..");
    if (dots == std::string::npos) {
      out.emplace_back(std::stoi(item), std::stoi(item));
    } else {
      out.emplace_back(std::stoi(item.substr(0, dots)), std::stoi(item.substr(dots + 2)));
    }
  }
  return out;
}

}  // namespace

SceneConfig parseSceneConfig(const KeyValueFile& kv) {
  SceneConfig cfg;
  cfg.frames = kv.getInt("frames", cfg.frames);
  cfg.seed = static_cast<std::uint64_t>(kv.getInt("seed", static_cast<int>(cfg.seed)));
  cfg.static_points = kv.getInt("static_points", cfg.static_points);
  if (kv.has("static_box_min")) {
    cfg.static_box_min = vec3FromList(kv.getDoubles("static_box_min"), "static_box_min");
  }
  if (kv.has("static_box_max")) {
    cfg.static_box_max = vec3FromList(kv.getDoubles("static_box_max"), "static_box_max");
  }
  cfg.camera = CameraModel(
      kv.getDouble("camera_fx", 500.0), kv.getDouble("camera_fy", 500.0),
      kv.getDouble("camera_cx", 320.0), kv.getDouble("camera_cy", 240.0),
      kv.getInt("camera_width", 640), kv.getInt("camera_height", 480),
      kv.getDouble("camera_depth_min", 0.1), kv.getDouble("camera_depth_max", 100.0));
  if (kv.has("camera_twist")) {
    cfg.camera_twist = twistFromList(kv.getDoubles("camera_twist"), "camera_twist");
  }
  cfg.noise.pixel_sigma = kv.getDouble("noise_pixel_sigma", cfg.noise.pixel_sigma);
  cfg.noise.depth_sigma = kv.getDouble("noise_depth_sigma", cfg.noise.depth_sigma);
  cfg.noise.flow_sigma = kv.getDouble("noise_flow_sigma", cfg.noise.flow_sigma);
  cfg.noise.outlier_rate = kv.getDouble("noise_outlier_rate", cfg.noise.outlier_rate);

  // object.<id>.<field> groups
  std::set<int> ids;
  for (const auto& [key, value] : kv.section("object")) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) throw ConfigError("bad object key: object." + key);
    ids.insert(std::stoi(key.substr(0, dot)));
  }
  for (int id : ids) {
    const std::string p = "object." + std::to_string(id) + ".";
    ObjectConfig obj;
    obj.id = id;
    obj.num_points = kv.getInt(p + "points", obj.num_points);
    if (kv.has(p + "center")) obj.center = vec3FromList(kv.getDoubles(p + "center"), p + "center");
    obj.half_extent = kv.getDouble(p + "half_extent", obj.half_extent);
    obj.first_frame = kv.getInt(p + "first_frame", obj.first_frame);
    obj.last_frame = kv.getInt(p + "last_frame", obj.last_frame);
    const std::string kind = kv.getString(p + "motion", "constant");
    if (kind == "constant") {
      obj.motion = MotionScriptKind::Constant;
    } else if (kind == "piecewise") {
      obj.motion = MotionScriptKind::Piecewise;
    } else if (kind == "sampled") {
      obj.motion = MotionScriptKind::Sampled;
    } else {
      throw ConfigError("unknown motion script '" + kind + "'");
    }
    if (kv.has(p + "twist")) obj.twist = twistFromList(kv.getDoubles(p + "twist"), p + "twist");
    for (const auto& [key, value] : kv.section("object." + std::to_string(id))) {
      if (key.rfind("twist_from_", 0) == 0) {
        const FrameId from = std::stoi(key.substr(std::string("twist_from_").size()));
        obj.piecewise[from] =
            twistFromList(kv.getDoubles("object." + std::to_string(id) + "." + key), key);
      }
    }
    obj.sampled_rot_step = kv.getDouble(p + "rot_step", obj.sampled_rot_step);
    obj.sampled_trans_step = kv.getDouble(p + "trans_step", obj.sampled_trans_step);
    if (kv.has(p + "occlude")) obj.occlusions = parseIntervals(kv.getString(p + "occlude", ""));
    cfg.objects.push_back(std::move(obj));
  }
  cfg.validate();
  return cfg;
}

RunParams parseRunParams(const KeyValueFile& kv) {
  RunParams rp;
  rp.formulation = formulationFromString(kv.getString("formulation", "wcme"));
  rp.window = kv.getInt("window", rp.window);
  rp.overlap = kv.getInt("overlap", rp.overlap);

  FrontendParams& fe = rp.frontend;
  fe.ransac_max_iterations = kv.getInt("frontend.ransac_max_iterations", fe.ransac_max_iterations);
  fe.ransac_inlier_threshold_px =
      kv.getDouble("frontend.ransac_inlier_threshold_px", fe.ransac_inlier_threshold_px);
  fe.ransac_confidence = kv.getDouble("frontend.ransac_confidence", fe.ransac_confidence);
  fe.min_correspondences = kv.getInt("frontend.min_correspondences", fe.min_correspondences);
  fe.projection_sigma_px = kv.getDouble("frontend.projection_sigma_px", fe.projection_sigma_px);
  fe.flow_sigma_px = kv.getDouble("frontend.flow_sigma_px", fe.flow_sigma_px);
  fe.flow_prior_sigma_px = kv.getDouble("frontend.flow_prior_sigma_px", fe.flow_prior_sigma_px);
  fe.point3d_sigma_m = kv.getDouble("frontend.point3d_sigma_m", fe.point3d_sigma_m);
  fe.motion3d_sigma_m = kv.getDouble("frontend.motion3d_sigma_m", fe.motion3d_sigma_m);
  fe.camera_prior_sigma = kv.getDouble("frontend.camera_prior_sigma", fe.camera_prior_sigma);
  fe.huber_k = kv.getDouble("frontend.huber_k", fe.huber_k);
  fe.gate_sigma = kv.getDouble("frontend.gate_sigma", fe.gate_sigma);
  fe.refine_flow = kv.getBool("frontend.refine_flow", fe.refine_flow);
  fe.refine_motion = kv.getBool("frontend.refine_motion", fe.refine_motion);

  BackendParams& be = rp.backend;
  be.point_lateral_sigma_per_m =
      kv.getDouble("backend.point_lateral_sigma_per_m", be.point_lateral_sigma_per_m);
  be.point_depth_sigma = kv.getDouble("backend.point_depth_sigma", be.point_depth_sigma);
  be.point_sigma_floor = kv.getDouble("backend.point_sigma_floor", be.point_sigma_floor);
  be.motion_sigma = kv.getDouble("backend.motion_sigma", be.motion_sigma);
  be.odom_sigma_rot = kv.getDouble("backend.odom_sigma_rot", be.odom_sigma_rot);
  be.odom_sigma_trans = kv.getDouble("backend.odom_sigma_trans", be.odom_sigma_trans);
  be.camera_prior_sigma = kv.getDouble("backend.camera_prior_sigma", be.camera_prior_sigma);
  be.smoothing_sigma_rot = kv.getDouble("backend.smoothing_sigma_rot", be.smoothing_sigma_rot);
  be.smoothing_sigma_trans =
      kv.getDouble("backend.smoothing_sigma_trans", be.smoothing_sigma_trans);
  be.object_pose_prior_sigma =
      kv.getDouble("backend.object_pose_prior_sigma", be.object_pose_prior_sigma);
  be.huber_k = kv.getDouble("backend.huber_k", be.huber_k);

  SolverConfig& sc = be.solver;
  sc.max_iterations = kv.getInt("solver.max_iterations", sc.max_iterations);
  sc.relative_cost_tol = kv.getDouble("solver.relative_cost_tol", sc.relative_cost_tol);
  sc.absolute_gradient_tol =
      kv.getDouble("solver.absolute_gradient_tol", sc.absolute_gradient_tol);
  sc.initial_lambda = kv.getDouble("solver.initial_lambda", sc.initial_lambda);
  sc.lambda_seed = kv.getDouble("solver.lambda_seed", sc.lambda_seed);
  sc.lambda_up = kv.getDouble("solver.lambda_up", sc.lambda_up);
  sc.lambda_down = kv.getDouble("solver.lambda_down", sc.lambda_down);
  sc.lambda_max = kv.getDouble("solver.lambda_max", sc.lambda_max);
  return rp;
}

std::string dumpDefaults() {
  const SceneConfig scene;
  const RunParams run;
  std::ostringstream os;
  os << "# scene configuration\n";
  os << "frames = " << scene.frames << "\n";
  os << "seed = " << scene.seed << "\n";
  os << "static_points = " << scene.static_points << "\n";
  os << "static_box_min = " << fmtDouble(scene.static_box_min.x()) << ", "
     << fmtDouble(scene.static_box_min.y()) << ", " << fmtDouble(scene.static_box_min.z()) << "\n";
  os << "static_box_max = " << fmtDouble(scene.static_box_max.x()) << ", "
     << fmtDouble(scene.static_box_max.y()) << ", " << fmtDouble(scene.static_box_max.z()) << "\n";
  os << "camera_fx = 500\ncamera_fy = 500\ncamera_cx = 320\ncamera_cy = 240\n";
  os << "camera_width = 640\ncamera_height = 480\ncamera_depth_min = 0.1\n"
        "camera_depth_max = 100\n";
  os << "camera_twist = 0, 0, 0, 0, 0, 0\n";
  os << "noise_pixel_sigma = " << fmtDouble(scene.noise.pixel_sigma) << "\n";
  os << "noise_depth_sigma = " << fmtDouble(scene.noise.depth_sigma) << "\n";
  os << "noise_flow_sigma = " << fmtDouble(scene.noise.flow_sigma) << "\n";
  os << "noise_outlier_rate = " << fmtDouble(scene.noise.outlier_rate) << "\n";
  os << "# per-object keys: object.<id>.points/center/half_extent/first_frame/last_frame\n";
  os << "#                  object.<id>.motion = constant|piecewise|sampled\n";
  os << "#                  object.<id>.twist = wx, wy, wz, vx, vy, vz\n";
  os << "#                  object.<id>.twist_from_<k>, rot_step, trans_step, occlude\n";
  os << "\n# run configuration\n";
  os << "formulation = " << toString(run.formulation) << "\n";
  os << "window = " << run.window << "    # 0 = full batch\n";
  os << "overlap = " << run.overlap << "\n";
  const FrontendParams& fe = run.frontend;
  os << "frontend.ransac_max_iterations = " << fe.ransac_max_iterations << "\n";
  os << "frontend.ransac_inlier_threshold_px = " << fmtDouble(fe.ransac_inlier_threshold_px)
     << "\n";
  os << "frontend.ransac_confidence = " << fmtDouble(fe.ransac_confidence) << "\n";
  os << "frontend.min_correspondences = " << fe.min_correspondences << "\n";
  os << "frontend.projection_sigma_px = " << fmtDouble(fe.projection_sigma_px) << "\n";
  os << "frontend.flow_sigma_px = " << fmtDouble(fe.flow_sigma_px) << "\n";
  os << "frontend.flow_prior_sigma_px = " << fmtDouble(fe.flow_prior_sigma_px) << "\n";
  os << "frontend.point3d_sigma_m = " << fmtDouble(fe.point3d_sigma_m) << "\n";
  os << "frontend.motion3d_sigma_m = " << fmtDouble(fe.motion3d_sigma_m) << "\n";
  os << "frontend.camera_prior_sigma = " << fmtDouble(fe.camera_prior_sigma) << "\n";
  os << "frontend.huber_k = " << fmtDouble(fe.huber_k) << "\n";
  os << "frontend.gate_sigma = " << fmtDouble(fe.gate_sigma) << "\n";
  os << "frontend.refine_flow = " << (fe.refine_flow ? "true" : "false") << "\n";
  os << "frontend.refine_motion = " << (fe.refine_motion ? "true" : "false") << "\n";
  const BackendParams& be = run.backend;
  os << "backend.point_lateral_sigma_per_m = " << fmtDouble(be.point_lateral_sigma_per_m)
     << "\n";
  os << "backend.point_depth_sigma = " << fmtDouble(be.point_depth_sigma) << "\n";
  os << "backend.point_sigma_floor = " << fmtDouble(be.point_sigma_floor) << "\n";
  os << "backend.motion_sigma = " << fmtDouble(be.motion_sigma) << "\n";
  os << "backend.odom_sigma_rot = " << fmtDouble(be.odom_sigma_rot) << "\n";
  os << "backend.odom_sigma_trans = " << fmtDouble(be.odom_sigma_trans) << "\n";
  os << "backend.camera_prior_sigma = " << fmtDouble(be.camera_prior_sigma) << "\n";
  os << "backend.smoothing_sigma_rot = " << fmtDouble(be.smoothing_sigma_rot) << "\n";
  os << "backend.smoothing_sigma_trans = " << fmtDouble(be.smoothing_sigma_trans) << "\n";
  os << "backend.object_pose_prior_sigma = " << fmtDouble(be.object_pose_prior_sigma) << "\n";
  os << "backend.huber_k = " << fmtDouble(be.huber_k) << "\n";
  const SolverConfig& sc = be.solver;
  os << "solver.max_iterations = " << sc.max_iterations << "\n";
  os << "solver.relative_cost_tol = " << fmtDouble(sc.relative_cost_tol) << "\n";
  os << "solver.absolute_gradient_tol = " << fmtDouble(sc.absolute_gradient_tol) << "\n";
  os << "solver.initial_lambda = " << fmtDouble(sc.initial_lambda) << "\n";
  os << "solver.lambda_seed = " << fmtDouble(sc.lambda_seed) << "\n";
  os << "solver.lambda_up = " << fmtDouble(sc.lambda_up) << "\n";
  os << "solver.lambda_down = " << fmtDouble(sc.lambda_down) << "\n";
  os << "solver.lambda_max = " << fmtDouble(sc.lambda_max) << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// JSON helpers
// ---------------------------------------------------------------------------

namespace {

json poseToJson(const Pose3& p) {
  const auto c = p.coeffs();
  return json::array({c[0], c[1], c[2], c[3], c[4], c[5], c[6]});
}

Pose3 poseFromJson(const json& j) {
  if (!j.is_array() || j.size() != 7) throw IoError("pose must be [tx,ty,tz,qx,qy,qz,qw]");
  Eigen::Matrix<double, 7, 1> c;
  for (int i = 0; i < 7; ++i) c[i] = j[i].get<double>();
  return Pose3::fromCoeffs(c);
}

json vec3ToJson(const Vector3& v) { return json::array({v.x(), v.y(), v.z()}); }
Vector3 vec3FromJson(const json& j) { return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()}; }

json twistToJson(const Twist& t) {
  return json::array({t.angular.x(), t.angular.y(), t.angular.z(), t.linear.x(), t.linear.y(),
                      t.linear.z()});
}

Twist twistFromJson(const json& j) {
  return {Vector3(j[0], j[1], j[2]), Vector3(j[3], j[4], j[5])};
}

json sceneConfigToJson(const SceneConfig& cfg) {
  json j;
  j["frames"] = cfg.frames;
  j["seed"] = cfg.seed;
  j["static_points"] = cfg.static_points;
  j["static_box_min"] = vec3ToJson(cfg.static_box_min);
  j["static_box_max"] = vec3ToJson(cfg.static_box_max);
  j["camera"] = {{"fx", cfg.camera.fx()},       {"fy", cfg.camera.fy()},
                 {"cx", cfg.camera.cx()},       {"cy", cfg.camera.cy()},
                 {"width", cfg.camera.width()}, {"height", cfg.camera.height()},
                 {"depth_min", cfg.camera.depthMin()}, {"depth_max", cfg.camera.depthMax()}};
  j["camera_twist"] = twistToJson(cfg.camera_twist);
  j["noise"] = {{"pixel_sigma", cfg.noise.pixel_sigma},
                {"depth_sigma", cfg.noise.depth_sigma},
                {"flow_sigma", cfg.noise.flow_sigma},
                {"outlier_rate", cfg.noise.outlier_rate}};
  j["objects"] = json::array();
  for (const auto& obj : cfg.objects) {
    json o;
    o["id"] = obj.id;
    o["points"] = obj.num_points;
    o["center"] = vec3ToJson(obj.center);
    o["half_extent"] = obj.half_extent;
    o["first_frame"] = obj.first_frame;
    o["last_frame"] = obj.last_frame;
    o["motion"] = obj.motion == MotionScriptKind::Constant
                      ? "constant"
                      : (obj.motion == MotionScriptKind::Piecewise ? "piecewise" : "sampled");
    o["twist"] = twistToJson(obj.twist);
    if (!obj.piecewise.empty()) {
      json pw = json::object();
      for (const auto& [k, xi] : obj.piecewise) pw[std::to_string(k)] = twistToJson(xi);
      o["piecewise"] = pw;
    }
    o["rot_step"] = obj.sampled_rot_step;
    o["trans_step"] = obj.sampled_trans_step;
    if (!obj.occlusions.empty()) {
      json occ = json::array();
      for (const auto& [a, b] : obj.occlusions) occ.push_back(json::array({a, b}));
      o["occlusions"] = occ;
    }
    j["objects"].push_back(o);
  }
  return j;
}

SceneConfig sceneConfigFromJson(const json& j) {
  SceneConfig cfg;
  cfg.frames = j.at("frames");
  cfg.seed = j.at("seed");
  cfg.static_points = j.at("static_points");
  cfg.static_box_min = vec3FromJson(j.at("static_box_min"));
  cfg.static_box_max = vec3FromJson(j.at("static_box_max"));
  const auto& c = j.at("camera");
  cfg.camera = CameraModel(c.at("fx"), c.at("fy"), c.at("cx"), c.at("cy"), c.at("width"),
                           c.at("height"), c.at("depth_min"), c.at("depth_max"));
  cfg.camera_twist = twistFromJson(j.at("camera_twist"));
  const auto& n = j.at("noise");
  cfg.noise = {n.at("pixel_sigma"), n.at("depth_sigma"), n.at("flow_sigma"),
               n.at("outlier_rate")};
  for (const auto& o : j.at("objects")) {
    ObjectConfig obj;
    obj.id = o.at("id");
    obj.num_points = o.at("points");
    obj.center = vec3FromJson(o.at("center"));
    obj.half_extent = o.at("half_extent");
    obj.first_frame = o.at("first_frame");
    obj.last_frame = o.at("last_frame");
    const std::string kind = o.at("motion");
    obj.motion = kind == "constant"
                     ? MotionScriptKind::Constant
                     : (kind == "piecewise" ? MotionScriptKind::Piecewise
                                            : MotionScriptKind::Sampled);
    obj.twist = twistFromJson(o.at("twist"));
    if (o.contains("piecewise")) {
      for (const auto& [k, xi] : o.at("piecewise").items()) {
        obj.piecewise[std::stoi(k)] = twistFromJson(xi);
      }
    }
    obj.sampled_rot_step = o.at("rot_step");
    obj.sampled_trans_step = o.at("trans_step");
    if (o.contains("occlusions")) {
      for (const auto& iv : o.at("occlusions")) {
        obj.occlusions.emplace_back(iv[0].get<int>(), iv[1].get<int>());
      }
    }
    cfg.objects.push_back(std::move(obj));
  }
  return cfg;
}

void writeLines(const std::filesystem::path& path, const std::vector<json>& lines) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& j : lines) out << j.dump() << "\n";
}

std::vector<json> readLines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw IoError(path.string() + ":" + std::to_string(lineno) + ": bad JSON line");
    }
  }
  return out;
}

}  // namespace

void saveDataset(const std::filesystem::path& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);

  json scene;
  scene["format_version"] = kFormatVersion;
  scene["config"] = sceneConfigToJson(data.config);
  scene["static_points"] = json::array();
  for (std::size_t i = 0; i < data.scene.static_points.size(); ++i) {
    scene["static_points"].push_back(
        {{"t", data.scene.static_tracklets[i]}, {"p", vec3ToJson(data.scene.static_points[i])}});
  }
  scene["objects"] = json::array();
  for (const auto& [id, obj] : data.scene.objects) {
    json o;
    o["id"] = id;
    o["first_frame"] = obj.first_frame;
    o["last_frame"] = obj.last_frame;
    o["tracklets"] = obj.tracklets;
    o["body_points"] = json::array();
    for (const auto& p : obj.body_points) o["body_points"].push_back(vec3ToJson(p));
    if (!obj.occlusions.empty()) {
      json occ = json::array();
      for (const auto& [a, b] : obj.occlusions) occ.push_back(json::array({a, b}));
      o["occlusions"] = occ;
    }
    scene["objects"].push_back(o);
  }
  std::ofstream sf(dir / "scene.json");
  if (!sf) throw IoError("cannot write scene.json");
  sf << scene.dump(2) << "\n";

  std::vector<json> lines;
  lines.reserve(data.measurements.frames.size());
  for (FrameId k = 0; k < static_cast<FrameId>(data.measurements.frames.size()); ++k) {
    json rec;
    rec["k"] = k;
    rec["camera"] = poseToJson(data.scene.camera_trajectory[k]);
    rec["objects"] = json::array();
    for (const auto& [id, obj] : data.scene.objects) {
      if (obj.inWindow(k)) {
        rec["objects"].push_back({{"id", id}, {"pose", poseToJson(obj.poseAt(k))}});
      }
    }
    rec["measurements"] = json::array();
    for (const auto& m : data.measurements.frames[k].measurements) {
      json mj;
      mj["t"] = m.tracklet;
      mj["o"] = m.object;
      mj["px"] = json::array({m.pixel.x(), m.pixel.y()});
      mj["d"] = m.depth;
      if (m.flow) mj["flow"] = json::array({m.flow->x(), m.flow->y()});
      if (m.injected_outlier) mj["out"] = true;
      rec["measurements"].push_back(std::move(mj));
    }
    lines.push_back(std::move(rec));
  }
  writeLines(dir / "frames.jsonl", lines);
}

Dataset loadDataset(const std::filesystem::path& dir) {
  std::ifstream sf(dir / "scene.json");
  if (!sf) throw IoError("cannot open " + (dir / "scene.json").string());
  json scene_json;
  try {
    sf >> scene_json;
  } catch (const json::parse_error&) {
    throw IoError("scene.json is not valid JSON");
  }
  if (scene_json.at("format_version").get<int>() != kFormatVersion) {
    throw IoError("unsupported dataset format_version");
  }

  Dataset data;
  data.config = sceneConfigFromJson(scene_json.at("config"));
  for (const auto& sp : scene_json.at("static_points")) {
    data.scene.static_tracklets.push_back(sp.at("t").get<TrackletId>());
    data.scene.static_points.push_back(vec3FromJson(sp.at("p")));
  }
  for (const auto& o : scene_json.at("objects")) {
    GtObject obj;
    obj.id = o.at("id");
    obj.first_frame = o.at("first_frame");
    obj.last_frame = o.at("last_frame");
    obj.tracklets = o.at("tracklets").get<std::vector<TrackletId>>();
    for (const auto& p : o.at("body_points")) obj.body_points.push_back(vec3FromJson(p));
    if (o.contains("occlusions")) {
      for (const auto& iv : o.at("occlusions")) {
        obj.occlusions.emplace_back(iv[0].get<int>(), iv[1].get<int>());
      }
    }
    data.scene.objects.emplace(obj.id, std::move(obj));
  }

  const auto lines = readLines(dir / "frames.jsonl");
  data.scene.camera_trajectory.resize(lines.size());
  data.measurements.applied = data.config.noise;
  data.measurements.frames.resize(lines.size());
  for (const auto& rec : lines) {
    const FrameId k = rec.at("k");
    if (k < 0 || k >= static_cast<FrameId>(lines.size())) throw IoError("bad frame index");
    data.scene.camera_trajectory[k] = poseFromJson(rec.at("camera"));
    for (const auto& oj : rec.at("objects")) {
      auto& obj = data.scene.objects.at(oj.at("id").get<ObjectId>());
      const FrameId local = k - obj.first_frame;
      if (local >= 0) {
        if (static_cast<FrameId>(obj.poses.size()) <= local) obj.poses.resize(local + 1);
        obj.poses[local] = poseFromJson(oj.at("pose"));
      }
    }
    auto& frame = data.measurements.frames[k];
    frame.frame = k;
    for (const auto& mj : rec.at("measurements")) {
      TrackedMeasurement m;
      m.frame = k;
      m.tracklet = mj.at("t").get<TrackletId>();
      m.object = mj.at("o").get<ObjectId>();
      m.pixel = Vector2(mj.at("px")[0], mj.at("px")[1]);
      m.depth = mj.at("d");
      if (mj.contains("flow")) m.flow = Vector2(mj.at("flow")[0], mj.at("flow")[1]);
      if (mj.contains("out")) m.injected_outlier = mj.at("out");
      m.local = data.config.camera.backProject(m.pixel, m.depth);
      frame.measurements.push_back(std::move(m));
    }
  }
  return data;
}

void saveFrontend(const std::filesystem::path& path, const FrontendOutput& fe) {
  std::vector<json> lines;
  lines.push_back({{"format_version", kFormatVersion}, {"type", "frontend"}});
  for (const auto& f : fe.frames) {
    json rec;
    rec["k"] = f.frame;
    rec["camera"] = poseToJson(f.camera_pose);
    rec["motions"] = json::array();
    for (const auto& [id, est] : f.motions) {
      rec["motions"].push_back({{"id", id},
                                {"h", poseToJson(est.motion)},
                                {"inliers", est.inlier_count},
                                {"outliers", est.outlier_count}});
    }
    json s = json::array();
    for (const auto& m : f.static_inliers) s.push_back(m.tracklet);
    json d = json::array();
    for (const auto& m : f.dynamic_inliers) d.push_back(m.tracklet);
    rec["static_inliers"] = std::move(s);
    rec["dynamic_inliers"] = std::move(d);
    lines.push_back(std::move(rec));
  }
  writeLines(path, lines);
}

FrontendOutput loadFrontend(const std::filesystem::path& path, const Dataset& data) {
  const auto lines = readLines(path);
  if (lines.empty() || lines[0].value("type", "") != "frontend") {
    throw IoError("not a frontend file: " + path.string());
  }
  FrontendOutput fe;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto& rec = lines[i];
    FrontendFrame f;
    f.frame = rec.at("k");
    f.camera_pose = poseFromJson(rec.at("camera"));
    for (const auto& mj : rec.at("motions")) {
      ObjectFrameEstimate est;
      est.motion = poseFromJson(mj.at("h"));
      est.inlier_count = mj.at("inliers");
      est.outlier_count = mj.at("outliers");
      f.motions.emplace(mj.at("id").get<ObjectId>(), est);
    }
    const auto static_ids = rec.at("static_inliers").get<std::set<TrackletId>>();
    const auto dynamic_ids = rec.at("dynamic_inliers").get<std::set<TrackletId>>();
    for (const auto& m : data.measurements.frames.at(f.frame).measurements) {
      if (m.isStatic() && static_ids.count(m.tracklet)) f.static_inliers.push_back(m);
      if (!m.isStatic() && dynamic_ids.count(m.tracklet)) f.dynamic_inliers.push_back(m);
      if (f.frame > 0 && !static_ids.count(m.tracklet) && !dynamic_ids.count(m.tracklet)) {
        fe.flagged_outliers.insert({m.tracklet, f.frame});
      }
    }
    fe.frames.push_back(std::move(f));
  }
  return fe;
}

void saveEstimate(const std::filesystem::path& dir, const EstimatorOutput& out) {
  std::filesystem::create_directories(dir);
  std::vector<json> lines;
  for (FrameId k = 0; k < static_cast<FrameId>(out.camera_poses.size()); ++k) {
    json rec;
    rec["k"] = k;
    rec["camera"] = poseToJson(out.camera_poses[k]);
    rec["objects"] = json::array();
    for (const auto& [id, obj] : out.objects) {
      json oj;
      if (const auto it = obj.poses.find(k); it != obj.poses.end()) {
        oj["id"] = id;
        oj["pose"] = poseToJson(it->second);
        if (const auto mit = obj.motions.find(k); mit != obj.motions.end()) {
          oj["motion"] = poseToJson(mit->second);
        }
        rec["objects"].push_back(std::move(oj));
      }
    }
    lines.push_back(std::move(rec));
  }
  writeLines(dir / "estimate.jsonl", lines);

  json stats;
  stats["format_version"] = kFormatVersion;
  stats["formulation"] = toString(out.kind);
  stats["windows"] = json::array();
  for (const auto& [a, b] : out.windows) stats["windows"].push_back(json::array({a, b}));
  stats["window_stats"] = json::array();
  for (const auto& s : out.window_stats) {
    stats["window_stats"].push_back({{"iterations", s.iterations},
                                     {"initial_cost", s.initial_cost},
                                     {"final_cost", s.final_cost},
                                     {"cost_trace", s.cost_trace},
                                     {"reason", toString(s.reason)},
                                     {"wall_time_s", s.wall_time_s}});
  }
  stats["warnings"] = out.warnings;
  stats["static_point_count"] = out.static_points.size();
  std::size_t dyn = 0;
  for (const auto& [id, obj] : out.objects) {
    for (const auto& [k, pts] : obj.points) dyn += pts.size();
  }
  stats["dynamic_point_count"] = dyn;
  std::ofstream sf(dir / "stats.json");
  if (!sf) throw IoError("cannot write stats.json");
  sf << stats.dump(2) << "\n";
}

EstimatorOutput loadEstimate(const std::filesystem::path& dir) {
  std::ifstream sf(dir / "stats.json");
  if (!sf) throw IoError("cannot open " + (dir / "stats.json").string());
  json stats;
  try {
    sf >> stats;
  } catch (const json::parse_error&) {
    throw IoError("stats.json is not valid JSON");
  }

  EstimatorOutput out;
  out.kind = formulationFromString(stats.at("formulation"));
  for (const auto& w : stats.at("windows")) out.windows.emplace_back(w[0], w[1]);
  if (stats.contains("warnings")) {
    out.warnings = stats.at("warnings").get<std::vector<std::string>>();
  }

  const auto lines = readLines(dir / "estimate.jsonl");
  out.camera_poses.resize(lines.size());
  for (const auto& rec : lines) {
    const FrameId k = rec.at("k");
    out.camera_poses.at(k) = poseFromJson(rec.at("camera"));
    for (const auto& oj : rec.at("objects")) {
      auto& obj = out.objects[oj.at("id").get<ObjectId>()];
      obj.poses[k] = poseFromJson(oj.at("pose"));
      if (oj.contains("motion")) obj.motions[k] = poseFromJson(oj.at("motion"));
    }
  }
  for (auto& [id, obj] : out.objects) {
    obj.first_frame = obj.poses.empty() ? 0 : obj.poses.begin()->first;
  }
  return out;
}

namespace {

// A contiguous run qualifies when it spans >= 3 frames.
bool hasThreeConsecutiveFrames(const std::map<FrameId, Pose3>& poses) {
  for (const auto& [k, p] : poses) {
    if (poses.count(k + 1) && poses.count(k + 2)) return true;
  }
  return false;
}

// Object RPE over matched est/gt pose pairs, consecutive frames only.
std::vector<ErrorSample> objectRpeSamples(ObjectId id, const std::map<FrameId, Pose3>& est,
                                          const GtObject& gt) {
  std::vector<ErrorSample> samples;
  for (const auto& [k, pose] : est) {
    const auto prev = est.find(k - 1);
    if (prev == est.end()) continue;
    if (!gt.inWindow(k) || !gt.inWindow(k - 1)) {
      throw MissingGroundTruthPoseError("object " + std::to_string(id) + " frame " +
                                        std::to_string(k));
    }
    const Pose3 rel_gt = gt.poseAt(k - 1).inverse() * gt.poseAt(k);
    const Pose3 rel_est = prev->second.inverse() * pose;
    samples.push_back({k, id, rel_gt.inverse() * rel_est});
  }
  return samples;
}

}  // namespace

SequenceReport evaluateSequence(const EstimatorOutput& estimate, const GroundTruthScene& gt,
                                const EvalOptions& options, const FrontendOutput* frontend) {
  if (estimate.camera_poses.size() != gt.camera_trajectory.size()) {
    throw LengthMismatchError("estimate and ground truth frame counts differ");
  }
  SequenceReport report;
  report.camera_ate_m = ate(estimate.camera_poses, gt.camera_trajectory, options.align_camera);
  report.camera_rpe = rpe(estimate.camera_poses, gt.camera_trajectory);

  const auto est_motions = estimate.motionsByObject();
  report.object_me = motionError(est_motions, gt);
  report.mean_me = averageOverObjects(report.object_me);

  for (const auto& [id, obj] : estimate.objects) {
    if (!hasThreeConsecutiveFrames(obj.poses)) continue;
    const auto git = gt.objects.find(id);
    if (git == gt.objects.end()) {
      throw MissingGroundTruthPoseError("unknown object " + std::to_string(id));
    }
    std::map<FrameId, Pose3> est_poses = obj.poses;
    if (options.reanchor_object_rpe) {
      // Standard frame alignment: re-anchor each contiguous motion chain at the
      // ground-truth pose of its anchor frame.
      est_poses.clear();
      auto it = obj.motions.begin();
      while (it != obj.motions.end()) {
        const FrameId anchor = it->first - 1;
        std::map<FrameId, Pose3> segment;
        FrameId k = it->first;
        while (it != obj.motions.end() && it->first == k) {
          segment[k] = it->second;
          ++it;
          ++k;
        }
        if (!git->second.inWindow(anchor)) {
          throw MissingGroundTruthPoseError("object " + std::to_string(id) + " frame " +
                                            std::to_string(anchor));
        }
        for (const auto& [frame, pose] :
             recoverObjectPoses(segment, anchor, git->second.poseAt(anchor))) {
          est_poses[frame] = pose;
        }
      }
    }
    const auto samples = objectRpeSamples(id, est_poses, git->second);
    if (!samples.empty()) report.object_rpe.emplace(id, rmseComponents(samples));
  }
  report.mean_rpe = averageOverObjects(report.object_rpe);

  for (const auto& [id, motions] : est_motions) {
    const auto git = gt.objects.find(id);
    if (git != gt.objects.end()) {
      report.me_traces["backend"][id] = motionErrorSamples(id, motions, git->second);
    }
  }
  if (frontend) {
    for (const auto& [id, motions] : frontend->motionsByObject()) {
      const auto git = gt.objects.find(id);
      if (git != gt.objects.end()) {
        report.me_traces["frontend"][id] = motionErrorSamples(id, motions, git->second);
      }
    }
  }
  return report;
}

void saveReport(const std::filesystem::path& dir, const SequenceReport& report) {
  std::filesystem::create_directories(dir);

  {
    std::ofstream csv(dir / "metrics.csv");
    if (!csv) throw IoError("cannot write metrics.csv");
    csv << "metric,object,samples,translation,rotation_deg\n";
    csv << "camera_ate,," << (report.camera_rpe.count + 1) << "," << fmtDouble(report.camera_ate_m)
        << ",\n";
    csv << "camera_rpe,," << report.camera_rpe.count << ","
        << fmtDouble(report.camera_rpe.translation_m) << ","
        << fmtDouble(report.camera_rpe.rotation_deg) << "\n";
    for (const auto& [id, r] : report.object_me) {
      csv << "object_me," << id << "," << r.count << "," << fmtDouble(r.translation_m) << ","
          << fmtDouble(r.rotation_deg) << "\n";
    }
    csv << "object_me_mean,," << report.mean_me.count << ","
        << fmtDouble(report.mean_me.translation_m) << "," << fmtDouble(report.mean_me.rotation_deg)
        << "\n";
    for (const auto& [id, r] : report.object_rpe) {
      csv << "object_rpe," << id << "," << r.count << "," << fmtDouble(r.translation_m) << ","
          << fmtDouble(r.rotation_deg) << "\n";
    }
    csv << "object_rpe_mean,," << report.mean_rpe.count << ","
        << fmtDouble(report.mean_rpe.translation_m) << ","
        << fmtDouble(report.mean_rpe.rotation_deg) << "\n";
  }

  {
    json j;
    j["format_version"] = kFormatVersion;
    j["camera"] = {{"ate_m", report.camera_ate_m},
                   {"rpe_t_m", report.camera_rpe.translation_m},
                   {"rpe_r_deg", report.camera_rpe.rotation_deg}};
    j["objects"] = json::object();
    for (const auto& [id, r] : report.object_me) {
      json o = {{"me_t_m", r.translation_m}, {"me_r_deg", r.rotation_deg}, {"samples", r.count}};
      if (const auto it = report.object_rpe.find(id); it != report.object_rpe.end()) {
        o["rpe_t_m"] = it->second.translation_m;
        o["rpe_r_deg"] = it->second.rotation_deg;
      }
      j["objects"][std::to_string(id)] = o;
    }
    j["mean"] = {{"me_t_m", report.mean_me.translation_m},
                 {"me_r_deg", report.mean_me.rotation_deg},
                 {"rpe_t_m", report.mean_rpe.translation_m},
                 {"rpe_r_deg", report.mean_rpe.rotation_deg}};
    std::ofstream out(dir / "summary.json");
    if (!out) throw IoError("cannot write summary.json");
    out << j.dump(2) << "\n";
  }

  {
    std::ofstream csv(dir / "me_per_frame.csv");
    if (!csv) throw IoError("cannot write me_per_frame.csv");
    csv << "stage,object,frame,me_t,me_r_deg\n";
    for (const auto& [stage, by_object] : report.me_traces) {
      for (const auto& [id, samples] : by_object) {
        for (const auto& s : samples) {
          csv << stage << "," << id << "," << s.frame << ","
              << fmtDouble(s.error.translation().norm()) << ","
              << fmtDouble(s.error.rotationAngle() * 180.0 / M_PI) << "\n";
        }
      }
    }
  }
}

namespace {

struct TracePoint {
  int frame;
  double value;
};

void writeSvg(const std::filesystem::path& path, const std::string& title,
              const std::map<std::string, std::vector<TracePoint>>& series) {
  const int w = 720, h = 300, margin = 40;
  double max_v = 1e-12;
  int min_f = 1 << 30, max_f = -(1 << 30);
  for (const auto& [name, pts] : series) {
    for (const auto& p : pts) {
      max_v = std::max(max_v, p.value);
      min_f = std::min(min_f, p.frame);
      max_f = std::max(max_f, p.frame);
    }
  }
  if (max_f <= min_f) max_f = min_f + 1;

  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << margin << "\" y=\"18\" font-size=\"13\">" << title << "</text>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << h - margin << "\" x2=\"" << w - margin
      << "\" y2=\"" << h - margin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << margin << "\" y1=\"" << margin << "\" x2=\"" << margin << "\" y2=\""
      << h - margin << "\" stroke=\"black\"/>\n";
  const char* colors[] = {"#0072b2", "#d55e00", "#009e73", "#cc79a7"};
  int ci = 0;
  int legend_y = 30;
  for (const auto& [name, pts] : series) {
    const char* color = colors[ci++ % 4];
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& p : pts) {
      const double x =
          margin + (w - 2.0 * margin) * (p.frame - min_f) / static_cast<double>(max_f - min_f);
      const double y = (h - margin) - (h - 2.0 * margin) * (p.value / max_v);
      out << x << "," << y << " ";
    }
    out << "\"/>\n";
    out << "<text x=\"" << w - margin - 160 << "\" y=\"" << legend_y << "\" font-size=\"11\" fill=\""
        << color << "\">" << name << " (max " << max_v << ")</text>\n";
    legend_y += 14;
  }
  out << "</svg>\n";
}

}  // namespace

void writePlotData(const std::filesystem::path& report_dir, const std::filesystem::path& out_dir) {
  std::ifstream in(report_dir / "me_per_frame.csv");
  if (!in) throw IoError("cannot open " + (report_dir / "me_per_frame.csv").string());
  std::filesystem::create_directories(out_dir);

  // stage -> object -> traces
  std::map<std::string, std::map<int, std::vector<std::array<double, 3>>>> rows;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto parts = splitList(line);
    if (parts.size() != 5) throw IoError("bad me_per_frame.csv row: " + line);
    rows[parts[0]][std::stoi(parts[1])].push_back(
        {std::stod(parts[2]), std::stod(parts[3]), std::stod(parts[4])});
  }

  std::ofstream csv(out_dir / "me_per_frame.csv");
  if (!csv) throw IoError("cannot write plot csv");
  csv << "stage,object,frame,me_t,me_r_deg\n";
  std::set<int> objects;
  for (const auto& [stage, by_object] : rows) {
    for (const auto& [id, samples] : by_object) {
      objects.insert(id);
      for (const auto& s : samples) {
        csv << stage << "," << id << "," << static_cast<int>(s[0]) << "," << fmtDouble(s[1]) << ","
            << fmtDouble(s[2]) << "\n";
      }
    }
  }

  for (int id : objects) {
    std::map<std::string, std::vector<TracePoint>> t_series, r_series;
    for (const auto& [stage, by_object] : rows) {
      const auto it = by_object.find(id);
      if (it == by_object.end()) continue;
      for (const auto& s : it->second) {
        t_series[stage].push_back({static_cast<int>(s[0]), s[1]});
        r_series[stage].push_back({static_cast<int>(s[0]), s[2]});
      }
    }
    writeSvg(out_dir / ("me_t_object_" + std::to_string(id) + ".svg"),
             "per-frame translation motion error, object " + std::to_string(id), t_series);
    writeSvg(out_dir / ("me_r_object_" + std::to_string(id) + ".svg"),
             "per-frame rotation motion error (deg), object " + std::to_string(id), r_series);
  }
}

}  // namespace motslam
