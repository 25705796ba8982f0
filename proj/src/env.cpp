#include "tsac/env.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "tsac/serialize.hpp"

namespace tsac {

using nlohmann::json;

void TaskSpec::validate() const {
  if (!(epsilon > 0.0)) throw ConfigError("TaskSpec: epsilon must be > 0");
  if (!(delta_reward > 0.0)) throw ConfigError("TaskSpec: delta_reward must be > 0");
  for (int j = 0; j < 2; ++j) {
    if (!(init_hi[j] > init_lo[j])) {
      throw ConfigError("TaskSpec: init_region must have positive area");
    }
  }
}

void CmdpSuite::validate() const {
  if (tasks.empty()) throw ConfigError("CmdpSuite: empty task list");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("CmdpSuite: gamma must be in (0,1)");
  if (horizon < 1) throw ConfigError("CmdpSuite: horizon must be >= 1");
  if (!(action_bound > 0.0)) throw ConfigError("CmdpSuite: action_bound must be > 0");
  if (state_dim != 2 || action_dim != 2) {
    throw ConfigError("CmdpSuite: the point suite is 2-D (state_dim == action_dim == 2)");
  }
  for (const TaskSpec& t : tasks) t.validate();
}

CmdpSuite CmdpSuite::builtin(const std::string& name) {
  CmdpSuite s;
  s.name = name;
  // Toy-suite scale: with the negative-distance shaping, gamma controls the
  // magnitude of values (~ -d / (1 - gamma)); 0.95 keeps critics in a range
  // they can fit quickly while still valuing ~20 steps of lookahead.
  s.gamma = 0.95;
  if (name == "mtpoint4") {
    // Goals in the four corners; gain signs flipped per task so that the
    // same raw action moves different tasks in opposite directions.
    const std::array<std::array<double, 2>, 4> goals{{{0.8, 0.8}, {-0.8, 0.8}, {0.8, -0.8}, {-0.8, -0.8}}};
    const std::array<std::array<double, 2>, 4> gains{{{1.0, 1.0}, {-1.0, -1.0}, {1.0, -1.0}, {-1.0, 1.0}}};
    for (int i = 0; i < 4; ++i) {
      TaskSpec t;
      t.task_id = i;
      t.goal = goals[static_cast<std::size_t>(i)];
      t.action_gain = gains[static_cast<std::size_t>(i)];
      s.tasks.push_back(t);
    }
  } else if (name == "mtpoint10") {
    for (int i = 0; i < 10; ++i) {
      TaskSpec t;
      t.task_id = i;
      const double ang = 2.0 * std::numbers::pi * static_cast<double>(i) / 10.0;
      t.goal = {0.8 * std::cos(ang), 0.8 * std::sin(ang)};
      t.action_gain = {(i % 2 == 0) ? 1.0 : -1.0, (i % 3 == 0) ? 1.0 : -1.0};
      s.tasks.push_back(t);
    }
  } else {
    throw ConfigError("unknown built-in suite '" + name + "' (known: mtpoint4, mtpoint10)");
  }
  s.validate();
  return s;
}

namespace {

DenseShaping shaping_from_string(const std::string& s) {
  if (s == "neg_distance") return DenseShaping::NegDistance;
  if (s == "neg_squared") return DenseShaping::NegSquared;
  if (s == "bounded_exp") return DenseShaping::BoundedExp;
  throw ConfigError("unknown dense_shaping '" + s + "'");
}

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
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

std::array<double, 2> vec2(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(where + ": expected a 2-element array");
  return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

CmdpSuite CmdpSuite::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("suite file is not valid JSON: ") + e.what());
  }
  reject_unknown_keys(j, {"name", "tasks", "action_bound", "gamma", "horizon", "dt"}, "suite");
  CmdpSuite s;
  s.name = j.value("name", "custom");
  s.action_bound = j.value("action_bound", 1.0);
  s.gamma = j.value("gamma", 0.99);
  s.horizon = j.value("horizon", std::size_t{100});
  s.dt = j.value("dt", 0.1);
  if (!j.contains("tasks") || !j["tasks"].is_array()) {
    throw ConfigError("suite: missing 'tasks' array");
  }
  int id = 0;
  for (const json& tj : j["tasks"]) {
    reject_unknown_keys(tj, {"goal", "epsilon", "action_gain", "init_region", "delta_reward", "dense_shaping"},
                        "task " + std::to_string(id));
    TaskSpec t;
    t.task_id = id++;
    if (!tj.contains("goal")) throw ConfigError("task: missing 'goal'");
    t.goal = vec2(tj["goal"], "goal");
    t.epsilon = tj.value("epsilon", 0.1);
    if (tj.contains("action_gain")) t.action_gain = vec2(tj["action_gain"], "action_gain");
    if (tj.contains("init_region")) {
      const json& r = tj["init_region"];
      if (!r.is_array() || r.size() != 2) throw ConfigError("init_region: expected [[lo,lo],[hi,hi]]");
      t.init_lo = vec2(r[0], "init_region lo");
      t.init_hi = vec2(r[1], "init_region hi");
    }
    t.delta_reward = tj.value("delta_reward", 1.0);
    if (tj.contains("dense_shaping")) t.dense_shaping = shaping_from_string(tj["dense_shaping"].get<std::string>());
    s.tasks.push_back(t);
  }
  s.validate();
  return s;
}

CmdpSuite CmdpSuite::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open suite file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

double sparse_reward(const std::array<double, 2>& s, const TaskSpec& task) {
  const double dx = s[0] - task.goal[0];
  const double dy = s[1] - task.goal[1];
  const double dist = std::sqrt(dx * dx + dy * dy);
  return dist <= task.epsilon ? task.delta_reward : 0.0;
}

double dense_reward(const std::array<double, 2>& s_next, const TaskSpec& task) {
  const double dx = s_next[0] - task.goal[0];
  const double dy = s_next[1] - task.goal[1];
  const double d2 = dx * dx + dy * dy;
  switch (task.dense_shaping) {
    case DenseShaping::NegDistance: return -std::sqrt(d2);
    case DenseShaping::NegSquared: return -d2;
    case DenseShaping::BoundedExp: return std::exp(-std::sqrt(d2)) - 1.0;
  }
  return 0.0;
}

const TaskSpec& sample_task(const CmdpSuite& suite, Rng& rng) {
  if (suite.tasks.empty()) throw ConfigError("sample_task: empty suite");
  std::uniform_int_distribution<std::size_t> dist(0, suite.tasks.size() - 1);
  return suite.tasks[dist(rng)];
}

std::array<double, 2> reset_state(const TaskSpec& task, Rng& rng) {
  std::array<double, 2> s;
  for (int j = 0; j < 2; ++j) {
    std::uniform_real_distribution<double> dist(task.init_lo[j], task.init_hi[j]);
    s[j] = dist(rng);
  }
  return s;
}

std::vector<double> make_observation(const CmdpSuite& suite, const TaskSpec& task,
                                     const std::array<double, 2>& s) {
  std::vector<double> obs(suite.obs_dim(), 0.0);
  obs[0] = s[0];
  obs[1] = s[1];
  obs[2 + static_cast<std::size_t>(task.task_id)] = 1.0;
  return obs;
}

Transition env_step(const CmdpSuite& suite, const TaskSpec& task, const std::array<double, 2>& s,
                    const std::array<double, 2>& a, std::size_t step_index) {
  for (int j = 0; j < 2; ++j) {
    if (!std::isfinite(s[j]) || !std::isfinite(a[j])) {
      throw SimulationError("env_step: non-finite state or action for task " +
                            std::to_string(task.task_id));
    }
  }
  std::array<double, 2> s_next;
  for (int j = 0; j < 2; ++j) s_next[j] = s[j] + task.action_gain[j] * a[j] * suite.dt;

  Transition t;
  t.task_id = task.task_id;
  t.s = make_observation(suite, task, s);
  t.a = {a[0], a[1]};
  t.s_next = make_observation(suite, task, s_next);
  t.r_dense = dense_reward(s_next, task);
  t.r_sparse = sparse_reward(s_next, task);
  t.done = step_index + 1 >= suite.horizon;
  t.success = t.r_sparse > 0.0;
  return t;
}

VectorEnv::VectorEnv(const CmdpSuite& suite, std::uint64_t seed, bool terminate_on_success)
    : suite_(suite), terminate_on_success_(terminate_on_success) {
  suite_.validate();
  for (std::size_t i = 0; i < suite_.tasks.size(); ++i) {
    Lane lane;
    lane.rng.seed(seed ^ (0x9e3779b97f4a7c15ULL * (i + 1)));
    lanes_.push_back(std::move(lane));
  }
  reset_all();
}

void VectorEnv::reset_all() {
  for (std::size_t i = 0; i < lanes_.size(); ++i) {
    lanes_[i].state = reset_state(suite_.tasks[i], lanes_[i].rng);
    lanes_[i].step_index = 0;
    lanes_[i].success = false;
  }
}

Tensor VectorEnv::observations() const {
  Tensor obs(lanes_.size(), suite_.obs_dim());
  for (std::size_t i = 0; i < lanes_.size(); ++i) {
    const std::vector<double> o = make_observation(suite_, suite_.tasks[i], lanes_[i].state);
    for (std::size_t j = 0; j < o.size(); ++j) obs(i, j) = o[j];
  }
  return obs;
}

void VectorEnv::rollout(const PolicyFn& policy, std::size_t rollout_steps,
                        std::vector<Transition>& out) {
  const std::size_t n = lanes_.size();
  for (std::size_t step = 0; step < rollout_steps; ++step) {
    const Tensor obs = observations();
    const Tensor actions = policy(obs);
    if (actions.rows() != n || actions.cols() != suite_.action_dim) {
      throw SimulationError("rollout: policy returned a [" + std::to_string(actions.rows()) + "," +
                            std::to_string(actions.cols()) + "] action batch");
    }
    for (std::size_t i = 0; i < n; ++i) {
      Lane& lane = lanes_[i];
      std::array<double, 2> a{actions(i, 0), actions(i, 1)};
      for (int j = 0; j < 2; ++j) {
        if (!std::isfinite(a[j])) {
          throw SimulationError("rollout: non-finite action from policy on lane " + std::to_string(i));
        }
      }
      Transition t = env_step(suite_, suite_.tasks[i], lane.state, a, lane.step_index);
      lane.success = lane.success || t.success;
      t.success = lane.success;
      lane.step_index += 1;
      // A bare horizon cut is a time limit, not an absorbing state: value
      // targets keep bootstrapping through it. Only the optional
      // stop-on-success termination is treated as absorbing.
      t.terminal = terminate_on_success_ && lane.success;
      const bool boundary = t.done || t.terminal;
      t.done = boundary;
      out.push_back(t);
      if (boundary) {
        lane.state = reset_state(suite_.tasks[i], lane.rng);
        lane.step_index = 0;
        lane.success = false;
      } else {
        lane.state = {t.s_next[0], t.s_next[1]};
      }
    }
  }
}

void VectorEnv::save(std::ostream& out) const {
  BinWriter w{out};
  w.u64(lanes_.size());
  for (const Lane& lane : lanes_) {
    w.f64(lane.state[0]);
    w.f64(lane.state[1]);
    w.u64(lane.step_index);
    w.u64(lane.success ? 1 : 0);
    w.rng(lane.rng);
  }
}

void VectorEnv::load(std::istream& in) {
  BinReader r{in};
  const std::size_t n = r.u64();
  if (n != lanes_.size()) throw Error("VectorEnv::load: lane count mismatch");
  for (Lane& lane : lanes_) {
    lane.state[0] = r.f64();
    lane.state[1] = r.f64();
    lane.step_index = r.u64();
    lane.success = r.u64() != 0;
    r.rng(lane.rng);
  }
}

}  // namespace tsac
