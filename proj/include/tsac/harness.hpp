#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tsac/trainer.hpp"

namespace tsac {

/// Fully-resolved experiment description. Loaded from a strict-schema JSON
/// file; every field has a default and unknown keys are rejected.
struct ExperimentConfig {
  std::string suite = "mtpoint4";  // built-in name or path to a suite JSON
  AlgoMode algo = AlgoMode::Tsac;
  CorrectionFnKind correction = CorrectionFnKind::SpDominated;
  std::uint64_t seed = 0;
  std::size_t total_iterations = 100;
  std::size_t eval_interval = 10;
  std::size_t eval_episodes_per_task = 10;
  std::string out_dir = "runs/default";
  bool deterministic = true;
  TrainerConfig trainer;

  static ExperimentConfig from_json_text(const std::string& text);
  static ExperimentConfig load(const std::string& path);
  std::string to_json_text() const;  // fully resolved, defaults expanded

  CmdpSuite resolve_suite() const;
};

struct MetricRecord {
  std::size_t iteration = 0;
  std::size_t env_steps = 0;
  double mean_success = 0.0;
  std::vector<double> per_task_success;
  double mean_dense_return = 0.0;
  double mean_sparse_return = 0.0;
  double lambda = 0.0;
  double alpha_sp = 0.0;
  double alpha_acp = 0.0;
  double wall_time = 0.0;  // seconds since run start; 0 in deterministic mode

  std::string to_json_line() const;
};

/// One metrics file: a config header line followed by metric lines.
struct RunMetrics {
  ExperimentConfig config;
  std::vector<MetricRecord> records;

  static RunMetrics load(const std::string& path);
};

/// Executes one experiment; writes <out_dir>/metrics.jsonl and a final
/// checkpoint <out_dir>/checkpoint.bin. Returns the metric stream.
std::vector<MetricRecord> run_experiment(const ExperimentConfig& config);

struct AblationRow {
  CorrectionFnKind variant;
  double final_success = 0.0;
  double best_smoothed_success = 0.0;
  bool failed = false;
  std::string error;
};

/// The four-variant correction-function sweep. Individual failures are
/// recorded and the sweep continues.
std::vector<AblationRow> ablation_sweep(const ExperimentConfig& base, std::size_t smoothing_window = 10);

/// Trailing moving average; output stays inside the [min, max] of each window.
std::vector<double> smooth(const std::vector<double>& xs, std::size_t window);

struct CompareCell {
  bool present = false;
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};

struct CompareRow {
  std::string entrant;  // "<algo>/<correction_fn>/<suite>"
  std::vector<CompareCell> at_checkpoints;
};

/// Groups metrics files by (algo, correction, suite); reports smoothed mean
/// success with standard error at each requested env-step checkpoint.
/// Checkpoints beyond a run's length are reported absent, never extrapolated.
std::vector<CompareRow> compare_runs(const std::vector<std::string>& metric_files,
                                     const std::vector<std::size_t>& checkpoints,
                                     std::size_t smoothing_window,
                                     std::vector<std::string>* missing = nullptr);

}  // namespace tsac
