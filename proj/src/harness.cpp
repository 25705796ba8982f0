#include "tsac/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

namespace tsac {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::vector<std::string>& allowed, const std::string& where) {
  std::vector<std::string> bad;
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const std::string& k : allowed)
      if (it.key() == k) { ok = true; break; }
    if (!ok) bad.push_back(it.key());
  }
  if (!bad.empty()) {
    std::string msg = "unknown keys in " + where + ":";
    for (const std::string& k : bad) msg += " '" + k + "'";
    throw ConfigError(msg);
  }
}

AlgoMode algo_from_string(const std::string& s) {
  if (s == "tsac") return AlgoMode::Tsac;
  if (s == "mtsac") return AlgoMode::Mtsac;
  throw ConfigError("unknown algo '" + s + "' (known: tsac, mtsac)");
}

std::string to_string(AlgoMode m) { return m == AlgoMode::Tsac ? "tsac" : "mtsac"; }

void parse_trainer(const json& j, TrainerConfig& t) {
  reject_unknown(j,
                 {"hidden", "batch_size", "replay_capacity", "rollout_steps",
                  "updates_per_iteration", "warmup_env_steps", "lr", "lr_lambda", "lr_alpha",
                  "budget_c", "tau", "init_lambda", "init_alpha", "target_entropy_sp",
                  "target_entropy_acp", "twin_critics", "actor_reduce", "plain_sgd",
                  "lambda_source", "terminate_on_success"},
                 "trainer");
  if (j.contains("hidden")) t.hidden = j["hidden"].get<std::vector<std::size_t>>();
  t.batch_size = j.value("batch_size", t.batch_size);
  t.replay_capacity = j.value("replay_capacity", t.replay_capacity);
  t.rollout_steps = j.value("rollout_steps", t.rollout_steps);
  t.updates_per_iteration = j.value("updates_per_iteration", t.updates_per_iteration);
  t.warmup_env_steps = j.value("warmup_env_steps", t.warmup_env_steps);
  t.lr = j.value("lr", t.lr);
  t.lr_lambda = j.value("lr_lambda", t.lr_lambda);
  t.lr_alpha = j.value("lr_alpha", t.lr_alpha);
  t.budget_c = j.value("budget_c", t.budget_c);
  t.tau = j.value("tau", t.tau);
  t.init_lambda = j.value("init_lambda", t.init_lambda);
  t.init_alpha = j.value("init_alpha", t.init_alpha);
  t.target_entropy_sp = j.value("target_entropy_sp", t.target_entropy_sp);
  t.target_entropy_acp = j.value("target_entropy_acp", t.target_entropy_acp);
  t.twin_critics = j.value("twin_critics", t.twin_critics);
  t.plain_sgd = j.value("plain_sgd", t.plain_sgd);
  t.terminate_on_success = j.value("terminate_on_success", t.terminate_on_success);
  if (j.contains("actor_reduce")) {
    const std::string s = j["actor_reduce"].get<std::string>();
    if (s == "min") t.actor_reduce = Reduce::Min;
    else if (s == "first") t.actor_reduce = Reduce::First;
    else throw ConfigError("unknown actor_reduce '" + s + "'");
  }
  if (j.contains("lambda_source")) {
    const std::string s = j["lambda_source"].get<std::string>();
    if (s == "rollout") t.lambda_source = LambdaSource::Rollout;
    else if (s == "replay") t.lambda_source = LambdaSource::Replay;
    else throw ConfigError("unknown lambda_source '" + s + "'");
  }
}

json trainer_to_json(const TrainerConfig& t) {
  json j;
  j["hidden"] = t.hidden;
  j["batch_size"] = t.batch_size;
  j["replay_capacity"] = t.replay_capacity;
  j["rollout_steps"] = t.rollout_steps;
  j["updates_per_iteration"] = t.updates_per_iteration;
  j["warmup_env_steps"] = t.warmup_env_steps;
  j["lr"] = t.lr;
  j["lr_lambda"] = t.lr_lambda;
  j["lr_alpha"] = t.lr_alpha;
  j["budget_c"] = t.budget_c;
  j["tau"] = t.tau;
  j["init_lambda"] = t.init_lambda;
  j["init_alpha"] = t.init_alpha;
  j["target_entropy_sp"] = t.target_entropy_sp;
  j["target_entropy_acp"] = t.target_entropy_acp;
  j["twin_critics"] = t.twin_critics;
  j["actor_reduce"] = t.actor_reduce == Reduce::Min ? "min" : "first";
  j["plain_sgd"] = t.plain_sgd;
  j["lambda_source"] = t.lambda_source == LambdaSource::Rollout ? "rollout" : "replay";
  j["terminate_on_success"] = t.terminate_on_success;
  return j;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["suite"] = c.suite;
  j["algo"] = to_string(c.algo);
  j["correction_fn"] = to_string(c.correction);
  j["seed"] = c.seed;
  j["total_iterations"] = c.total_iterations;
  j["eval_interval"] = c.eval_interval;
  j["eval_episodes_per_task"] = c.eval_episodes_per_task;
  j["out_dir"] = c.out_dir;
  j["deterministic"] = c.deterministic;
  j["trainer"] = trainer_to_json(c.trainer);
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j,
                 {"suite", "algo", "correction_fn", "seed", "total_iterations", "eval_interval",
                  "eval_episodes_per_task", "out_dir", "deterministic", "trainer"},
                 "config");
  ExperimentConfig c;
  c.suite = j.value("suite", c.suite);
  if (j.contains("algo")) c.algo = algo_from_string(j["algo"].get<std::string>());
  if (j.contains("correction_fn")) {
    c.correction = correction_from_string(j["correction_fn"].get<std::string>());
    if (c.algo == AlgoMode::Mtsac) {
      std::cerr << "warning: correction_fn is ignored when algo = mtsac\n";
    }
  }
  c.seed = j.value("seed", c.seed);
  c.total_iterations = j.value("total_iterations", c.total_iterations);
  c.eval_interval = j.value("eval_interval", c.eval_interval);
  c.eval_episodes_per_task = j.value("eval_episodes_per_task", c.eval_episodes_per_task);
  c.out_dir = j.value("out_dir", c.out_dir);
  c.deterministic = j.value("deterministic", c.deterministic);
  if (j.contains("trainer")) parse_trainer(j["trainer"], c.trainer);
  if (c.eval_interval == 0) throw ConfigError("eval_interval must be >= 1");
  return c;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string ExperimentConfig::to_json_text() const { return config_to_json(*this).dump(); }

CmdpSuite ExperimentConfig::resolve_suite() const {
  if (suite.size() > 5 && suite.substr(suite.size() - 5) == ".json") return CmdpSuite::load(suite);
  return CmdpSuite::builtin(suite);
}

std::string MetricRecord::to_json_line() const {
  json j;
  j["type"] = "metric";
  j["iteration"] = iteration;
  j["env_steps"] = env_steps;
  j["mean_success"] = mean_success;
  j["per_task_success"] = per_task_success;
  j["mean_dense_return"] = mean_dense_return;
  j["mean_sparse_return"] = mean_sparse_return;
  j["lambda"] = lambda;
  j["alpha_sp"] = alpha_sp;
  j["alpha_acp"] = alpha_acp;
  j["wall_time"] = wall_time;
  return j.dump();
}

RunMetrics RunMetrics::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open metrics file '" + path + "'");
  RunMetrics rm;
  std::string line;
  bool have_config = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    const std::string type = j.value("type", "");
    if (type == "config") {
      rm.config = config_from_json(j.at("config"));
      have_config = true;
    } else if (type == "metric") {
      MetricRecord r;
      r.iteration = j.value("iteration", std::size_t{0});
      r.env_steps = j.value("env_steps", std::size_t{0});
      r.mean_success = j.value("mean_success", 0.0);
      if (j.contains("per_task_success"))
        r.per_task_success = j["per_task_success"].get<std::vector<double>>();
      r.mean_dense_return = j.value("mean_dense_return", 0.0);
      r.mean_sparse_return = j.value("mean_sparse_return", 0.0);
      r.lambda = j.value("lambda", 0.0);
      r.alpha_sp = j.value("alpha_sp", 0.0);
      r.alpha_acp = j.value("alpha_acp", 0.0);
      r.wall_time = j.value("wall_time", 0.0);
      rm.records.push_back(std::move(r));
    }
  }
  if (!have_config) throw ConfigError("metrics file '" + path + "' has no config header");
  return rm;
}

std::vector<MetricRecord> run_experiment(const ExperimentConfig& config) {
  namespace fs = std::filesystem;
  const CmdpSuite suite = config.resolve_suite();
  TrainerConfig tc = config.trainer;
  tc.mode = config.algo;
  tc.correction = config.correction;
  Trainer trainer(suite, tc, config.seed);

  fs::create_directories(config.out_dir);
  std::ofstream metrics_out(fs::path(config.out_dir) / "metrics.jsonl");
  if (!metrics_out) throw ConfigError("cannot write metrics in '" + config.out_dir + "'");
  {
    json header;
    header["type"] = "config";
    header["config"] = json::parse(config.to_json_text());
    metrics_out << header.dump() << "\n";
  }

  const auto start = std::chrono::steady_clock::now();
  std::vector<MetricRecord> records;
  auto emit = [&]() {
    const EvalResult ev = trainer.evaluate(
        config.eval_episodes_per_task,
        config.seed * 0x9e3779b97f4a7c15ULL + trainer.iteration());
    MetricRecord r;
    r.iteration = trainer.iteration();
    r.env_steps = trainer.env_steps();
    r.mean_success = ev.mean_success;
    r.per_task_success = ev.per_task_success;
    r.mean_dense_return = ev.mean_dense_return;
    r.mean_sparse_return = ev.mean_sparse_return;
    r.lambda = trainer.lagrange().lambda;
    r.alpha_sp = trainer.entropy().alpha_sp();
    r.alpha_acp = trainer.entropy().alpha_acp();
    if (!config.deterministic) {
      r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    metrics_out << r.to_json_line() << "\n";
    metrics_out.flush();
    records.push_back(std::move(r));
  };

  emit();  // initial evaluation
  for (std::size_t it = 1; it <= config.total_iterations; ++it) {
    trainer.train_iteration();
    if (it % config.eval_interval == 0 || it == config.total_iterations) emit();
  }
  trainer.save_file((fs::path(config.out_dir) / "checkpoint.bin").string());
  return records;
}

std::vector<double> smooth(const std::vector<double>& xs, std::size_t window) {
  if (window == 0) window = 1;
  std::vector<double> out(xs.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    acc += xs[i];
    if (i >= window) acc -= xs[i - window];
    out[i] = acc / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

std::vector<AblationRow> ablation_sweep(const ExperimentConfig& base, std::size_t smoothing_window) {
  namespace fs = std::filesystem;
  const CorrectionFnKind variants[] = {CorrectionFnKind::SpDominated, CorrectionFnKind::AcpDominated,
                                       CorrectionFnKind::Equal, CorrectionFnKind::Softclip};
  std::vector<AblationRow> rows;
  for (CorrectionFnKind v : variants) {
    AblationRow row;
    row.variant = v;
    ExperimentConfig cfg = base;
    cfg.algo = AlgoMode::Tsac;
    cfg.correction = v;
    cfg.out_dir = (fs::path(base.out_dir) / to_string(v)).string();
    try {
      const std::vector<MetricRecord> records = run_experiment(cfg);
      std::vector<double> succ;
      for (const MetricRecord& r : records) succ.push_back(r.mean_success);
      const std::vector<double> sm = smooth(succ, smoothing_window);
      row.final_success = sm.empty() ? 0.0 : sm.back();
      for (double s : sm) row.best_smoothed_success = std::max(row.best_smoothed_success, s);
    } catch (const std::exception& e) {
      row.failed = true;
      row.error = e.what();
    }
    rows.push_back(std::move(row));
  }
  fs::create_directories(base.out_dir);
  std::ofstream out(fs::path(base.out_dir) / "ablation_summary.jsonl");
  for (const AblationRow& r : rows) {
    json j;
    j["variant"] = to_string(r.variant);
    j["final_success"] = r.final_success;
    j["best_smoothed_success"] = r.best_smoothed_success;
    j["failed"] = r.failed;
    if (r.failed) j["error"] = r.error;
    out << j.dump() << "\n";
  }
  return rows;
}

std::vector<CompareRow> compare_runs(const std::vector<std::string>& metric_files,
                                     const std::vector<std::size_t>& checkpoints,
                                     std::size_t smoothing_window,
                                     std::vector<std::string>* missing) {
  struct Run {
    std::vector<std::size_t> steps;
    std::vector<double> smoothed;
  };
  std::map<std::string, std::vector<Run>> groups;
  for (const std::string& path : metric_files) {
    RunMetrics rm;
    try {
      rm = RunMetrics::load(path);
    } catch (const std::exception&) {
      if (missing) missing->push_back(path);
      continue;
    }
    std::string key = to_string(rm.config.algo);
    if (rm.config.algo == AlgoMode::Tsac) key += "/" + to_string(rm.config.correction);
    key += "/" + rm.config.suite;
    Run run;
    std::vector<double> succ;
    for (const MetricRecord& r : rm.records) {
      run.steps.push_back(r.env_steps);
      succ.push_back(r.mean_success);
    }
    run.smoothed = smooth(succ, smoothing_window);
    groups[key].push_back(std::move(run));
  }

  std::vector<CompareRow> rows;
  for (auto& [key, runs] : groups) {
    CompareRow row;
    row.entrant = key;
    for (std::size_t cp : checkpoints) {
      std::vector<double> vals;
      for (const Run& run : runs) {
        if (run.steps.empty() || cp > run.steps.back()) continue;  // no extrapolation
        std::size_t best = 0;
        for (std::size_t i = 0; i < run.steps.size(); ++i)
          if (run.steps[i] <= cp) best = i;
        vals.push_back(run.smoothed[best]);
      }
      CompareCell cell;
      if (!vals.empty()) {
        cell.present = true;
        cell.n = vals.size();
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= static_cast<double>(vals.size());
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        cell.mean = mean;
        cell.stderr_ = vals.size() > 1
                           ? std::sqrt(var / (static_cast<double>(vals.size()) - 1.0) /
                                       static_cast<double>(vals.size()))
                           : 0.0;
      }
      row.at_checkpoints.push_back(cell);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace tsac
