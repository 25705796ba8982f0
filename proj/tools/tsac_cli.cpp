#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "tsac/harness.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::string suite;
  std::string algo;
  std::string correction;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iterations;
  std::string out;
  bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "experiment config JSON");
  cmd->add_option("--suite", f.suite, "built-in suite name or suite JSON path");
  cmd->add_option("--algo", f.algo, "tsac | mtsac");
  cmd->add_option("--correction-fn", f.correction,
                  "sp_dominated | acp_dominated | equal | softclip");
  cmd->add_option("--seed", f.seed, "RNG seed");
  cmd->add_option("--iterations", f.iterations, "training iterations");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_flag("--deterministic", f.deterministic, "byte-reproducible metrics");
}

tsac::ExperimentConfig resolve(const CommonFlags& f) {
  tsac::ExperimentConfig cfg;
  if (!f.config_path.empty()) cfg = tsac::ExperimentConfig::load(f.config_path);
  if (!f.suite.empty()) cfg.suite = f.suite;
  if (!f.algo.empty()) {
    if (f.algo == "tsac") cfg.algo = tsac::AlgoMode::Tsac;
    else if (f.algo == "mtsac") cfg.algo = tsac::AlgoMode::Mtsac;
    else throw tsac::ConfigError("unknown algo '" + f.algo + "'");
  }
  if (!f.correction.empty()) {
    cfg.correction = tsac::correction_from_string(f.correction);
    if (cfg.algo == tsac::AlgoMode::Mtsac)
      std::cerr << "warning: --correction-fn is ignored when algo = mtsac\n";
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.iterations) cfg.total_iterations = *f.iterations;
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (f.deterministic) cfg.deterministic = true;
  return cfg;
}

int do_run(const CommonFlags& f) {
  const tsac::ExperimentConfig cfg = resolve(f);
  const std::vector<tsac::MetricRecord> records = tsac::run_experiment(cfg);
  if (!records.empty()) {
    const tsac::MetricRecord& last = records.back();
    std::cout << "final: iteration=" << last.iteration << " env_steps=" << last.env_steps
              << " mean_success=" << last.mean_success << "\n";
  }
  std::cout << "metrics: " << cfg.out_dir << "/metrics.jsonl\n";
  return 0;
}

int do_ablate(const CommonFlags& f, std::size_t window) {
  const tsac::ExperimentConfig cfg = resolve(f);
  const std::vector<tsac::AblationRow> rows = tsac::ablation_sweep(cfg, window);
  std::cout << "variant         final  best\n";
  for (const tsac::AblationRow& r : rows) {
    if (r.failed) {
      std::cout << tsac::to_string(r.variant) << "  FAILED: " << r.error << "\n";
    } else {
      std::cout << tsac::to_string(r.variant) << "  " << r.final_success << "  "
                << r.best_smoothed_success << "\n";
    }
  }
  std::cout << "summary: " << cfg.out_dir << "/ablation_summary.jsonl\n";
  return 0;
}

int do_compare(const std::vector<std::string>& files, std::vector<std::size_t> checkpoints,
               std::size_t window) {
  std::vector<std::string> missing;
  const std::vector<tsac::CompareRow> rows = tsac::compare_runs(files, checkpoints, window, &missing);
  for (const std::string& m : missing) std::cerr << "skipped (unreadable): " << m << "\n";
  std::cout << "entrant";
  for (std::size_t cp : checkpoints) std::cout << "\t@" << cp;
  std::cout << "\n";
  for (const tsac::CompareRow& row : rows) {
    std::cout << row.entrant;
    for (const tsac::CompareCell& c : row.at_checkpoints) {
      if (c.present)
        std::cout << "\t" << c.mean << " +/- " << c.stderr_ << " (n=" << c.n << ")";
      else
        std::cout << "\tabsent";
    }
    std::cout << "\n";
  }
  return 0;
}

int do_evaluate(const CommonFlags& f, const std::string& checkpoint, std::size_t episodes) {
  const tsac::ExperimentConfig cfg = resolve(f);
  tsac::TrainerConfig tc = cfg.trainer;
  tc.mode = cfg.algo;
  tc.correction = cfg.correction;
  tsac::Trainer trainer(cfg.resolve_suite(), tc, cfg.seed);
  std::string ckpt = checkpoint;
  if (ckpt.empty()) ckpt = (std::filesystem::path(cfg.out_dir) / "checkpoint.bin").string();
  trainer.load_file(ckpt);
  const tsac::EvalResult ev = trainer.evaluate(episodes, cfg.seed + 1);
  std::cout << "mean_success=" << ev.mean_success << " +/- " << ev.stderr_success << "\n";
  for (std::size_t i = 0; i < ev.per_task_success.size(); ++i) {
    std::cout << "task " << i << ": " << ev.per_task_success[i] << "\n";
  }
  std::cout << "mean_dense_return=" << ev.mean_dense_return
            << " mean_sparse_return=" << ev.mean_sparse_return << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TSAC multi-task RL experiment harness"};
  app.require_subcommand(1);

  CommonFlags run_flags, ablate_flags, eval_flags;
  std::size_t ablate_window = 10, compare_window = 10, eval_episodes = 20;
  std::vector<std::string> compare_files;
  std::vector<std::size_t> compare_at;
  std::string eval_checkpoint;

  CLI::App* run_cmd = app.add_subcommand("run", "train one configuration");
  add_common(run_cmd, run_flags);

  CLI::App* ablate_cmd = app.add_subcommand("ablate", "correction-function sweep (4 variants)");
  add_common(ablate_cmd, ablate_flags);
  ablate_cmd->add_option("--window", ablate_window, "smoothing window (evaluation points)");

  CLI::App* compare_cmd = app.add_subcommand("compare", "merge metric files across algos/seeds");
  compare_cmd->add_option("files", compare_files, "metrics.jsonl files")->required();
  compare_cmd->add_option("--at", compare_at, "env-step checkpoints");
  compare_cmd->add_option("--window", compare_window, "smoothing window");

  CLI::App* eval_cmd = app.add_subcommand("evaluate", "evaluate a checkpointed policy");
  add_common(eval_cmd, eval_flags);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint file (default <out>/checkpoint.bin)");
  eval_cmd->add_option("--episodes", eval_episodes, "episodes per task");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) return do_run(run_flags);
    if (ablate_cmd->parsed()) return do_ablate(ablate_flags, ablate_window);
    if (compare_cmd->parsed()) {
      if (compare_at.empty()) compare_at = {std::size_t{10000}, std::size_t{50000}};
      return do_compare(compare_files, compare_at, compare_window);
    }
    if (eval_cmd->parsed()) return do_evaluate(eval_flags, eval_checkpoint, eval_episodes);
  } catch (const tsac::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const tsac::TrainingError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 2;
  } catch (const tsac::SimulationError& e) {
    std::cerr << "simulation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
