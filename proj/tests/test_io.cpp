#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "motslam/io.hpp"
#include "test_support.hpp"

using namespace motslam;
using namespace motslam::testing;

namespace fs = std::filesystem;

namespace {

fs::path tempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("motslam_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("key-value config parsing") {
  const KeyValueFile kv = KeyValueFile::parseString(
      "# comment\n"
      "frames = 12\n"
      "noise_pixel_sigma = 0.5   # trailing comment\n"
      "camera_twist = 0, 0.01, 0, 0.1, 0, 0\n"
      "name = \"quoted value\"\n"
      "flag = true\n");
  CHECK(kv.getInt("frames", 0) == 12);
  CHECK(kv.getDouble("noise_pixel_sigma", 0.0) == 0.5);
  CHECK(kv.getDoubles("camera_twist").size() == 6);
  CHECK(kv.getString("name", "") == "quoted value");
  CHECK(kv.getBool("flag", false));
  CHECK(kv.getInt("missing", 7) == 7);

  CHECK_THROWS_AS(KeyValueFile::parseString("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(KeyValueFile::parseString("frames = twelve\n").getInt("frames", 0), ConfigError);
}

TEST_CASE("scene config round trip through the key-value format") {
  const KeyValueFile kv = KeyValueFile::parseString(
      "frames = 9\n"
      "seed = 3\n"
      "static_points = 17\n"
      "camera_twist = 0, 0.002, 0, 0.02, 0, 0.03\n"
      "noise_pixel_sigma = 0\n"
      "noise_depth_sigma = 0\n"
      "object.1.points = 21\n"
      "object.1.center = -3, 0.5, 10\n"
      "object.1.twist = 0, 0.03, 0, 0.08, 0, 0.02\n"
      "object.2.points = 12\n"
      "object.2.center = 3, 0, 12\n"
      "object.2.motion = piecewise\n"
      "object.2.twist = 0, 0, 0, 0.05, 0, 0\n"
      "object.2.twist_from_4 = 0, 0, 0.02, 0, 0.05, 0\n"
      "object.2.occlude = 5..6\n");
  const SceneConfig cfg = parseSceneConfig(kv);
  CHECK(cfg.frames == 9);
  CHECK(cfg.seed == 3);
  CHECK(cfg.static_points == 17);
  REQUIRE(cfg.objects.size() == 2);
  CHECK(cfg.objects[0].num_points == 21);
  CHECK(cfg.objects[1].motion == MotionScriptKind::Piecewise);
  CHECK(cfg.objects[1].piecewise.size() == 1);
  CHECK(cfg.objects[1].occlusions.size() == 1);
  CHECK(cfg.objects[1].occlusions[0] == std::pair<FrameId, FrameId>{5, 6});

  // Usable end to end.
  const Dataset data = makeDataset(cfg);
  CHECK(data.measurements.frames.size() == 9);
}

TEST_CASE("dump-defaults output parses back") {
  const std::string text = dumpDefaults();
  const KeyValueFile kv = KeyValueFile::parseString(text);
  CHECK(kv.getInt("frames", -1) == SceneConfig{}.frames);
  const RunParams rp = parseRunParams(kv);
  CHECK(rp.window == 0);
  CHECK(rp.backend.smoothing_sigma_trans == BackendParams{}.smoothing_sigma_trans);
  CHECK(rp.frontend.huber_k == FrontendParams{}.huber_k);
}

TEST_CASE("dataset save/load round trip") {
  SceneConfig cfg = standardScene(6, 2, 15, 12, 7);
  cfg.noise.pixel_sigma = 0.5;
  cfg.noise.outlier_rate = 0.1;
  const Dataset data = makeDataset(cfg);
  const fs::path dir = tempDir("dataset");
  saveDataset(dir, data);
  const Dataset loaded = loadDataset(dir);

  CHECK(loaded.config.frames == cfg.frames);
  CHECK(loaded.config.seed == cfg.seed);
  REQUIRE(loaded.scene.camera_trajectory.size() == data.scene.camera_trajectory.size());
  for (std::size_t k = 0; k < data.scene.camera_trajectory.size(); ++k) {
    CHECK((loaded.scene.camera_trajectory[k].coeffs() -
           data.scene.camera_trajectory[k].coeffs()).norm() == 0.0);
  }
  for (const auto& [id, obj] : data.scene.objects) {
    const GtObject& lobj = loaded.scene.objects.at(id);
    CHECK(lobj.first_frame == obj.first_frame);
    CHECK(lobj.poses.size() == obj.poses.size());
    for (std::size_t i = 0; i < obj.poses.size(); ++i) {
      CHECK((lobj.poses[i].coeffs() - obj.poses[i].coeffs()).norm() == 0.0);
    }
  }
  REQUIRE(loaded.measurements.frames.size() == data.measurements.frames.size());
  for (std::size_t k = 0; k < data.measurements.frames.size(); ++k) {
    const auto& a = data.measurements.frames[k].measurements;
    const auto& b = loaded.measurements.frames[k].measurements;
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].tracklet == b[i].tracklet);
      CHECK(a[i].object == b[i].object);
      CHECK((a[i].pixel - b[i].pixel).norm() == 0.0);
      CHECK(a[i].depth == b[i].depth);
      CHECK(a[i].injected_outlier == b[i].injected_outlier);
      CHECK(a[i].flow.has_value() == b[i].flow.has_value());
      // z_3D re-derived from pixel + depth on load.
      CHECK((a[i].local - b[i].local).norm() == 0.0);
    }
  }
}

TEST_CASE("dataset serialization is byte-identical across runs") {
  SceneConfig cfg = standardScene(5, 1, 10, 10, 7);
  cfg.noise.pixel_sigma = 1.0;
  const fs::path dir_a = tempDir("det_a");
  const fs::path dir_b = tempDir("det_b");
  saveDataset(dir_a, makeDataset(cfg));
  saveDataset(dir_b, makeDataset(cfg));
  CHECK(slurp(dir_a / "scene.json") == slurp(dir_b / "scene.json"));
  CHECK(slurp(dir_a / "frames.jsonl") == slurp(dir_b / "frames.jsonl"));
}

TEST_CASE("frontend and estimate files round trip") {
  SceneConfig cfg = standardScene(6, 1, 20, 15, 9);
  cfg.noise.pixel_sigma = 0.5;
  cfg.noise.depth_sigma = 0.005;
  const Dataset data = makeDataset(cfg);
  FrontendParams fparams;
  const FrontendOutput fe = Frontend(fparams, cfg.camera).run(data.measurements);
  const EstimatorOutput est = runBatch(FormulationKind::WCME, fe, BackendParams{});

  const fs::path dir = tempDir("estimate");
  saveFrontend(dir / "frontend.jsonl", fe);
  saveEstimate(dir, est);

  const FrontendOutput fe2 = loadFrontend(dir / "frontend.jsonl", data);
  REQUIRE(fe2.frames.size() == fe.frames.size());
  for (std::size_t k = 0; k < fe.frames.size(); ++k) {
    CHECK((fe2.frames[k].camera_pose.coeffs() - fe.frames[k].camera_pose.coeffs()).norm() == 0.0);
    CHECK(fe2.frames[k].static_inliers.size() == fe.frames[k].static_inliers.size());
    CHECK(fe2.frames[k].dynamic_inliers.size() == fe.frames[k].dynamic_inliers.size());
    REQUIRE(fe2.frames[k].motions.size() == fe.frames[k].motions.size());
    for (const auto& [id, m] : fe.frames[k].motions) {
      CHECK((fe2.frames[k].motions.at(id).motion.coeffs() - m.motion.coeffs()).norm() == 0.0);
    }
  }
  CHECK(fe2.flagged_outliers == fe.flagged_outliers);

  const EstimatorOutput est2 = loadEstimate(dir);
  CHECK((est2.kind == est.kind));
  REQUIRE(est2.camera_poses.size() == est.camera_poses.size());
  for (std::size_t k = 0; k < est.camera_poses.size(); ++k) {
    CHECK((est2.camera_poses[k].coeffs() - est.camera_poses[k].coeffs()).norm() == 0.0);
  }
  for (const auto& [id, obj] : est.objects) {
    for (const auto& [k, h] : obj.motions) {
      CHECK((est2.objects.at(id).motions.at(k).coeffs() - h.coeffs()).norm() == 0.0);
    }
    for (const auto& [k, p] : obj.poses) {
      CHECK((est2.objects.at(id).poses.at(k).coeffs() - p.coeffs()).norm() == 0.0);
    }
  }
}

TEST_CASE("evaluation report files") {
  SceneConfig cfg = standardScene(8, 2, 25, 20, 10);
  const Dataset data = makeDataset(cfg);
  FrontendParams fparams;
  const FrontendOutput fe = Frontend(fparams, cfg.camera).run(data.measurements);
  const EstimatorOutput est = runBatch(FormulationKind::WCME, fe, BackendParams{});

  const SequenceReport report = evaluateSequence(est, data.scene, EvalOptions{}, &fe);
  // Noise-free end-to-end: every metric tiny.
  CHECK(report.camera_ate_m < 1e-6);
  CHECK(report.mean_me.translation_m < 1e-6);
  CHECK(report.mean_me.rotation_deg < 1e-5);
  CHECK(report.mean_rpe.translation_m < 1e-6);
  CHECK(report.me_traces.count("frontend") == 1);
  CHECK(report.me_traces.count("backend") == 1);

  const fs::path dir = tempDir("report");
  saveReport(dir, report);
  CHECK(fs::exists(dir / "metrics.csv"));
  CHECK(fs::exists(dir / "summary.json"));
  CHECK(fs::exists(dir / "me_per_frame.csv"));

  const std::string csv = slurp(dir / "metrics.csv");
  CHECK(csv.find("metric,object,samples,translation,rotation_deg") == 0);
  CHECK(csv.find("camera_ate") != std::string::npos);
  CHECK(csv.find("object_me,1,") != std::string::npos);
  CHECK(csv.find("object_rpe_mean") != std::string::npos);

  const fs::path plots = tempDir("plots");
  writePlotData(dir, plots);
  CHECK(fs::exists(plots / "me_per_frame.csv"));
  CHECK(fs::exists(plots / "me_t_object_1.svg"));
  const std::string svg = slurp(plots / "me_t_object_1.svg");
  CHECK(svg.find("<svg") == 0);
  CHECK(svg.find("polyline") != std::string::npos);
}

TEST_CASE("evaluation against ground truth itself is exactly zero") {
  const Dataset data = makeDataset(standardScene(8, 1, 15, 12, 11));
  EstimatorOutput truth;
  truth.kind = FormulationKind::WCME;
  truth.camera_poses = data.scene.camera_trajectory;
  for (const auto& [id, obj] : data.scene.objects) {
    ObjectEstimate est;
    est.first_frame = obj.first_frame;
    for (FrameId k = obj.first_frame; k <= obj.last_frame; ++k) {
      est.poses[k] = obj.poseAt(k);
      if (k > obj.first_frame) est.motions[k] = obj.motionAt(k);
    }
    truth.objects.emplace(id, std::move(est));
  }
  const SequenceReport report = evaluateSequence(truth, data.scene, EvalOptions{});
  CHECK(report.camera_ate_m < 1e-12);
  CHECK(report.mean_me.translation_m < 1e-12);
  CHECK(report.mean_me.rotation_deg < 1e-10);
  CHECK(report.mean_rpe.translation_m < 1e-12);
}

TEST_CASE("corrupt input files are reported") {
  const fs::path dir = tempDir("corrupt");
  CHECK_THROWS_AS(loadDataset(dir), IoError);
  std::ofstream(dir / "scene.json") << "{ not json";
  CHECK_THROWS_AS(loadDataset(dir), IoError);
}
