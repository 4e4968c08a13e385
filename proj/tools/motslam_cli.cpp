#include <cstdio>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "motslam/io.hpp"

namespace fs = std::filesystem;
using namespace motslam;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInputError = 2;
constexpr int kExitNumericalError = 3;

struct GenerateArgs {
  std::string config;
  std::string out;
  int seed = -1;  // overrides the config when >= 0
};

int cmdGenerate(const GenerateArgs& args) {
  SceneConfig cfg = parseSceneConfig(KeyValueFile::parse(args.config));
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  const Dataset data = makeDataset(cfg);
  saveDataset(args.out, data);

  std::size_t n_meas = 0;
  for (const auto& f : data.measurements.frames) n_meas += f.measurements.size();
  std::cout << "generated " << cfg.frames << " frames, " << data.scene.objects.size()
            << " objects, " << data.scene.static_points.size() << " static tracklets, " << n_meas
            << " measurements -> " << args.out << "\n";
  return kExitOk;
}

struct SolveArgs {
  std::string data;
  std::string out;
  std::string config;
  std::string formulation = "wcme";
  int window = 0;
  int overlap = 1;
  int seed = 0;
  bool formulation_set = false;
  bool window_set = false;
  bool overlap_set = false;
};

int cmdSolve(const SolveArgs& args) {
  const Dataset data = loadDataset(args.data);
  RunParams run;
  if (!args.config.empty()) run = parseRunParams(KeyValueFile::parse(args.config));
  if (args.formulation_set) run.formulation = formulationFromString(args.formulation);
  if (args.window_set) run.window = args.window;
  if (args.overlap_set) run.overlap = args.overlap;
  run.frontend.seed = static_cast<std::uint64_t>(args.seed);

  const Frontend frontend(run.frontend, data.config.camera);
  const FrontendOutput fe = frontend.run(data.measurements);

  EstimatorOutput estimate =
      run.window <= 0 ? runBatch(run.formulation, fe, run.backend)
                      : runSlidingWindow(run.formulation, fe, run.window, run.overlap, run.backend);

  fs::create_directories(args.out);
  saveFrontend(fs::path(args.out) / "frontend.jsonl", fe);
  saveEstimate(args.out, estimate);

  const auto& stats = estimate.window_stats;
  double total_time = 0.0;
  for (const auto& s : stats) total_time += s.wall_time_s;
  std::cout << "solved " << toString(run.formulation) << " over " << estimate.windows.size()
            << " window(s) in " << total_time << " s; final cost "
            << (stats.empty() ? 0.0 : stats.back().final_cost) << " -> " << args.out << "\n";
  for (const auto& w : estimate.warnings) std::cerr << "warning: " << w << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string data;
  std::string estimate;
  std::string out;
  bool no_align = false;
  bool raw_anchor = false;
};

int cmdEval(const EvalArgs& args) {
  const Dataset data = loadDataset(args.data);
  const EstimatorOutput estimate = loadEstimate(args.estimate);
  if (estimate.camera_poses.size() != data.scene.camera_trajectory.size()) {
    throw IoError("estimate/dataset frame counts differ; mismatched pair?");
  }
  EvalOptions options;
  options.align_camera = !args.no_align;
  options.reanchor_object_rpe = !args.raw_anchor;

  FrontendOutput fe;
  const FrontendOutput* fe_ptr = nullptr;
  const fs::path fe_path = fs::path(args.estimate) / "frontend.jsonl";
  if (fs::exists(fe_path)) {
    fe = loadFrontend(fe_path, data);
    fe_ptr = &fe;
  }

  const SequenceReport report = evaluateSequence(estimate, data.scene, options, fe_ptr);
  saveReport(args.out, report);
  std::cout << "camera ate " << report.camera_ate_m << " m; mean ME_t "
            << report.mean_me.translation_m << " m; mean ME_r " << report.mean_me.rotation_deg
            << " deg -> " << args.out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-object dynamic SLAM: synthetic scenes, estimation and evaluation"};
  app.require_subcommand(1);
  bool dump_defaults = false;
  app.add_flag("--dump-defaults", dump_defaults, "print every tunable with its default and exit");

  GenerateArgs gen;
  auto* generate = app.add_subcommand("generate", "simulate a dataset from a scene config");
  generate->add_option("--config", gen.config, "scene config file")->required();
  generate->add_option("--out", gen.out, "output dataset directory")->required();
  generate->add_option("--seed", gen.seed, "override the config seed");

  SolveArgs solve;
  auto* solve_cmd = app.add_subcommand("solve", "run front-end and back-end on a dataset");
  solve_cmd->add_option("--data", solve.data, "dataset directory")->required();
  solve_cmd->add_option("--out", solve.out, "output directory")->required();
  solve_cmd->add_option("--config", solve.config, "run config file");
  solve_cmd->add_option("--formulation", solve.formulation, "wcme | wcpe")
      ->each([&](const std::string&) { solve.formulation_set = true; });
  solve_cmd->add_option("--window", solve.window, "sliding window size (0 = full batch)")
      ->each([&](const std::string&) { solve.window_set = true; });
  solve_cmd->add_option("--overlap", solve.overlap, "sliding window overlap")
      ->each([&](const std::string&) { solve.overlap_set = true; });
  solve_cmd->add_option("--seed", solve.seed, "front-end RANSAC seed");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate an estimate against ground truth");
  eval_cmd->add_option("--data", eval.data, "dataset directory")->required();
  eval_cmd->add_option("--estimate", eval.estimate, "estimate directory")->required();
  eval_cmd->add_option("--out", eval.out, "report directory")->required();
  eval_cmd->add_flag("--no-align", eval.no_align, "skip camera trajectory alignment");
  eval_cmd->add_flag("--raw-anchor", eval.raw_anchor,
                     "object RPE on the estimator's own anchors (skip re-anchoring)");

  std::string report_dir, plot_dir;
  auto* plot_cmd = app.add_subcommand("plotdata", "figure-ready CSV and SVG charts from a report");
  plot_cmd->add_option("--report", report_dir, "report directory from eval")->required();
  plot_cmd->add_option("--out", plot_dir, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (dump_defaults) {
      std::cout << dumpDefaults();
      return kExitOk;
    }
    return app.exit(e) == 0 ? kExitOk : kExitInputError;
  }
  if (dump_defaults) {
    std::cout << dumpDefaults();
    return kExitOk;
  }

  try {
    if (*generate) return cmdGenerate(gen);
    if (*solve_cmd) return cmdSolve(solve);
    if (*eval_cmd) return cmdEval(eval);
    if (*plot_cmd) {
      writePlotData(report_dir, plot_dir);
      std::cout << "plot data -> " << plot_dir << "\n";
      return kExitOk;
    }
  } catch (const SingularSystemError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumericalError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  }
  return kExitInputError;
}
