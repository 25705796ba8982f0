#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "tsac/mlp.hpp"
#include "tsac/tensor.hpp"

namespace tsac {

/// Dense reward shaping variants. All are strictly increasing as the
/// distance to the goal shrinks.
enum class DenseShaping : std::uint8_t {
  NegDistance,     // -||s' - s_g||
  NegSquared,      // -||s' - s_g||^2
  BoundedExp,      // exp(-||s' - s_g||) - 1, in (-1, 0]
};

/// One task of the contextual MDP: goal, sparse-reward region, dynamics
/// gain and initial-state box.
struct TaskSpec {
  int task_id = 0;
  std::array<double, 2> goal{0.0, 0.0};
  double epsilon = 0.1;
  std::array<double, 2> action_gain{1.0, 1.0};
  std::array<double, 2> init_lo{-0.5, -0.5};
  std::array<double, 2> init_hi{0.5, 0.5};
  double delta_reward = 1.0;
  DenseShaping dense_shaping = DenseShaping::NegDistance;

  void validate() const;
};

/// The task family plus the shared spaces and episode parameters.
struct CmdpSuite {
  std::string name;
  std::vector<TaskSpec> tasks;
  std::size_t state_dim = 2;
  std::size_t action_dim = 2;
  double action_bound = 1.0;
  double gamma = 0.99;
  std::size_t horizon = 100;
  double dt = 0.1;

  std::size_t num_tasks() const { return tasks.size(); }
  /// Observation = state ++ one-hot(task_id).
  std::size_t obs_dim() const { return state_dim + tasks.size(); }

  void validate() const;

  /// Built-in suites by name ("mtpoint4", "mtpoint10").
  static CmdpSuite builtin(const std::string& name);
  /// Structured suite description from a JSON file; strict schema.
  static CmdpSuite load(const std::string& path);
  static CmdpSuite from_json_text(const std::string& text);
};

/// Replay / rollout unit. `s` and `s_next` are full observations
/// (position plus one-hot task encoding).
struct Transition {
  int task_id = 0;
  std::vector<double> s;
  std::vector<double> a;
  std::vector<double> s_next;
  double r_dense = 0.0;
  double r_sparse = 0.0;
  bool done = false;      // episode boundary (horizon or configured success stop)
  bool terminal = false;  // absorbing for TD bootstrapping; never set for bare
                          // time limits, only for success termination
  bool success = false;   // latched: episode has entered the eps-region
};

double sparse_reward(const std::array<double, 2>& s, const TaskSpec& task);
double dense_reward(const std::array<double, 2>& s_next, const TaskSpec& task);

/// Uniform draw over the suite's task list.
const TaskSpec& sample_task(const CmdpSuite& suite, Rng& rng);

/// Uniform draw from the task's init box.
std::array<double, 2> reset_state(const TaskSpec& task, Rng& rng);

/// One deterministic dynamics step: s' = s + gain * a * dt. The caller is
/// responsible for clipping `a` into [-A, A]. `step_index` is the 0-based
/// step count before this transition; done is set when it reaches horizon.
Transition env_step(const CmdpSuite& suite, const TaskSpec& task, const std::array<double, 2>& s,
                    const std::array<double, 2>& a, std::size_t step_index);

std::vector<double> make_observation(const CmdpSuite& suite, const TaskSpec& task,
                                     const std::array<double, 2>& s);

/// Batched policy callback for rollouts: obs [N, obs_dim] -> actions
/// [N, action_dim], componentwise within [-A, A].
using PolicyFn = std::function<Tensor(const Tensor& obs)>;

/// One environment lane per task, stepped in lockstep. Each lane owns a
/// fixed RNG stream so results do not depend on stepping order.
class VectorEnv {
 public:
  VectorEnv(const CmdpSuite& suite, std::uint64_t seed, bool terminate_on_success = false);

  /// Appends rollout_steps * N transitions to `out`. Lanes auto-reset at
  /// horizon (and on success when configured).
  void rollout(const PolicyFn& policy, std::size_t rollout_steps, std::vector<Transition>& out);

  Tensor observations() const;
  const CmdpSuite& suite() const { return suite_; }
  void reset_all();

  void save(std::ostream& out) const;
  void load(std::istream& in);

 private:
  struct Lane {
    std::array<double, 2> state;
    std::size_t step_index = 0;
    bool success = false;
    Rng rng;
  };

  CmdpSuite suite_;
  std::vector<Lane> lanes_;
  bool terminate_on_success_;
};

}  // namespace tsac
