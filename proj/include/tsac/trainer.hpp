#pragma once

#include <iosfwd>
#include <optional>

#include "tsac/critic.hpp"
#include "tsac/env.hpp"
#include "tsac/policy.hpp"

namespace tsac {

/// FIFO ring buffer with uniform sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {}

  void push(const Transition& t);
  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t cursor() const { return cursor_; }
  const Transition& at(std::size_t i) const { return data_[i]; }

  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;

  // checkpoint access
  std::vector<Transition>& raw() { return data_; }
  void set_cursor(std::size_t c) { cursor_ = c; }

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Transition> data_;
};

/// Dual variable for the virtual sparse-reward budget.
struct LagrangeState {
  double lambda = 0.0;
  double c = -0.05;   // per-step budget; C = c / (1 - gamma)
  double lr = 3e-4;

  double big_budget(double gamma) const { return c / (1.0 - gamma); }

  /// slack = mean(sparse rewards) + c; lambda <- max(0, lambda - lr * slack).
  /// Returns the slack estimate.
  double update(const std::vector<double>& sparse_rewards);
};

/// Auto-tuned entropy coefficients, one per policy.
struct EntropyState {
  double log_alpha_sp = 0.0;
  double log_alpha_acp = 0.0;
  double target_entropy_sp = 0.0;
  double target_entropy_acp = 0.0;
  AdamState opt_sp;
  AdamState opt_acp;

  double alpha_sp() const;
  double alpha_acp() const;
};

enum class AlgoMode : std::uint8_t { Tsac, Mtsac };
enum class LambdaSource : std::uint8_t { Rollout, Replay };

struct TrainerConfig {
  std::vector<std::size_t> hidden{128, 128};
  std::size_t batch_size = 256;
  std::size_t replay_capacity = 1'000'000;
  std::size_t rollout_steps = 100;
  /// Gradient-update rounds per iteration; 0 means one per collected
  /// environment step (rollout_steps * num_tasks).
  std::size_t updates_per_iteration = 0;
  /// Environment steps acted uniformly at random before the policies take over.
  std::size_t warmup_env_steps = 1000;
  double lr = 3e-4;
  double lr_lambda = 3e-4;
  double lr_alpha = 3e-4;
  double budget_c = -0.05;
  double tau = 0.005;
  double init_lambda = 0.0;
  double init_alpha = 0.2;
  /// 0 resolves to -action_dim at construction.
  double target_entropy_sp = 0.0;
  double target_entropy_acp = 0.0;
  bool twin_critics = true;
  Reduce actor_reduce = Reduce::Min;
  bool plain_sgd = false;
  LambdaSource lambda_source = LambdaSource::Rollout;
  AlgoMode mode = AlgoMode::Tsac;
  CorrectionFnKind correction = CorrectionFnKind::SpDominated;
  bool terminate_on_success = false;
};

/// Replay minibatch, column-major over fields.
struct Batch {
  Tensor obs, act, obs_next;
  Tensor r_dense, r_sparse, done;  // [B, 1]
  std::size_t size() const { return obs.rows(); }
};

struct EvalResult {
  std::vector<double> per_task_success;
  double mean_success = 0.0;
  double stderr_success = 0.0;
  double mean_dense_return = 0.0;
  double mean_sparse_return = 0.0;
};

/// The full training loop: rollout collection, replay, critic TD updates,
/// SP/ACP policy updates with separated gradient paths, Lagrange-multiplier
/// and entropy-coefficient updates. MT-SAC is the degenerate mode that never
/// touches the ACP, the sparse critic or lambda.
class Trainer {
 public:
  Trainer(CmdpSuite suite, TrainerConfig config, std::uint64_t seed);

  /// One Algorithm-style iteration: collect -> lambda -> repeated
  /// {critics, SP, ACP, entropy} update rounds.
  void train_iteration();

  /// Deterministic-policy evaluation; does not consume the training RNG.
  EvalResult evaluate(std::size_t episodes_per_task, std::uint64_t eval_seed);

  std::vector<Transition> collect_rollout();

  void update_lambda(const std::vector<Transition>& rollout);
  void update_critics(const Batch& batch);
  void update_sp(const Batch& batch);
  void update_acp(const Batch& batch);
  void update_entropy(const Batch& batch);

  Batch sample_batch();

  // Loss builders with explicit noise, used by the update functions and by
  // the finite-difference tests. Gradients accumulate into the owning
  // parameter buffers when requested.
  double critic_loss_value(const Batch& batch, const Tensor& noise_sp, const Tensor& noise_acp,
                           bool accumulate_grads);
  double sp_loss_value(const Batch& batch, const Tensor& noise_sp, const Tensor& noise_acp,
                       bool accumulate_grads);
  double acp_loss_value(const Batch& batch, const Tensor& noise_sp, const Tensor& noise_acp,
                        bool accumulate_grads);
  double alpha_loss_value(bool acp, const Batch& batch, const Tensor& noise, double* grad_out);

  void save(std::ostream& out) const;
  void load(std::istream& in);
  void save_file(const std::string& path) const;
  void load_file(const std::string& path);

  // state access
  const CmdpSuite& suite() const { return suite_; }
  const TrainerConfig& config() const { return config_; }
  GaussianPolicy& sp() { return sp_; }
  GaussianPolicy& acp() { return acp_; }
  CriticParams& critics() { return critics_; }
  LagrangeState& lagrange() { return lagrange_; }
  EntropyState& entropy() { return entropy_; }
  Rng& rng() { return rng_; }
  std::size_t iteration() const { return iteration_; }
  std::size_t env_steps() const { return env_steps_; }
  std::size_t replay_size() const { return replay_.size(); }
  ReplayBuffer& replay() { return replay_; }

 private:
  Tensor act_batch(const Tensor& obs, Rng& rng, bool deterministic);

  CmdpSuite suite_;
  TrainerConfig config_;
  GaussianPolicy sp_, acp_;
  CriticParams critics_;
  AdamState opt_sp_, opt_acp_, opt_dense_, opt_sparse_;
  LagrangeState lagrange_;
  EntropyState entropy_;
  ReplayBuffer replay_;
  VectorEnv env_;
  Rng rng_;
  std::size_t iteration_ = 0;
  std::size_t env_steps_ = 0;
};

}  // namespace tsac
