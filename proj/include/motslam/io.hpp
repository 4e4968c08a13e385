#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "motslam/backend.hpp"
#include "motslam/frontend.hpp"
#include "motslam/metrics.hpp"
#include "motslam/scene.hpp"

namespace motslam {

inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// Flat key = value configuration files ('#' comments, commas for vectors).
// ---------------------------------------------------------------------------

class KeyValueFile {
 public:
  static KeyValueFile parse(const std::filesystem::path& path);
  static KeyValueFile parseString(const std::string& text);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  std::string getString(const std::string& key, const std::string& fallback) const;
  double getDouble(const std::string& key, double fallback) const;
  int getInt(const std::string& key, int fallback) const;
  bool getBool(const std::string& key, bool fallback) const;
  std::vector<double> getDoubles(const std::string& key) const;

  // Keys beginning with `prefix.`; the returned map strips the prefix.
  std::map<std::string, std::string> section(const std::string& prefix) const;
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

SceneConfig parseSceneConfig(const KeyValueFile& kv);

struct RunParams {
  FormulationKind formulation = FormulationKind::WCME;
  int window = 0;  // 0: full batch
  int overlap = 1;
  FrontendParams frontend;
  BackendParams backend;
};

RunParams parseRunParams(const KeyValueFile& kv);

// Every tunable with its default, in config-file syntax.
std::string dumpDefaults();

// ---------------------------------------------------------------------------
// Dataset, front-end, estimate and report files.
// ---------------------------------------------------------------------------

// scene.json + frames.jsonl under `dir`.
void saveDataset(const std::filesystem::path& dir, const Dataset& data);
Dataset loadDataset(const std::filesystem::path& dir);

void saveFrontend(const std::filesystem::path& path, const FrontendOutput& fe);
FrontendOutput loadFrontend(const std::filesystem::path& path, const Dataset& data);

// estimate.jsonl + stats.json under `dir`.
void saveEstimate(const std::filesystem::path& dir, const EstimatorOutput& out);
EstimatorOutput loadEstimate(const std::filesystem::path& dir);

struct SequenceReport {
  double camera_ate_m = 0.0;
  RmseComponents camera_rpe;
  std::map<ObjectId, RmseComponents> object_me;
  std::map<ObjectId, RmseComponents> object_rpe;
  RmseComponents mean_me;
  RmseComponents mean_rpe;
  // Per-frame ME traces by stage name ("frontend", "backend").
  std::map<std::string, std::map<ObjectId, std::vector<ErrorSample>>> me_traces;
};

struct EvalOptions {
  bool align_camera = true;
  // Re-anchor estimated object trajectories at the first ground-truth pose
  // before computing RPE (standard frame alignment). Disable to expose the
  // estimator's own anchor choice.
  bool reanchor_object_rpe = true;
};

SequenceReport evaluateSequence(const EstimatorOutput& estimate, const GroundTruthScene& gt,
                                const EvalOptions& options,
                                const FrontendOutput* frontend = nullptr);

// metrics.csv, summary.json and me_per_frame.csv under `dir`.
void saveReport(const std::filesystem::path& dir, const SequenceReport& report);

// One SVG line chart per object from the per-frame ME traces.
void writePlotData(const std::filesystem::path& report_dir,
                   const std::filesystem::path& out_dir);

}  // namespace motslam
