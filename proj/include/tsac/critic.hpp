#pragma once

#include "tsac/mlp.hpp"
#include "tsac/tensor.hpp"

namespace tsac {

enum class CriticHead : std::uint8_t { Dense, Sparse };
enum class Reduce : std::uint8_t { Min, First };

/// Twin dense and sparse critics with frozen target copies.
/// `twin == false` keeps a single critic per head (strict-TD mode).
struct CriticParams {
  MlpParams dense1, dense2, sparse1, sparse2;
  MlpParams t_dense1, t_dense2, t_sparse1, t_sparse2;
  double tau = 0.005;
  bool twin = true;

  static CriticParams make(std::size_t obs_dim, std::size_t act_dim,
                           const std::vector<std::size_t>& hidden, Rng& rng, double tau,
                           bool twin);

  /// target <- (1 - tau) * target + tau * online, elementwise.
  void polyak_update();

  void zero_grads(CriticHead head);
};

Tensor concat_obs_act(const Tensor& obs, const Tensor& act);

/// Numeric twin-reduced evaluation, one scalar per batch row.
Tensor q_eval(CriticParams& params, const Tensor& obs, const Tensor& act, CriticHead head,
              bool use_target, Reduce reduce);

/// Graph version over an already-concatenated (obs, act) input.
Tape::Id q_forward(Tape& tape, CriticParams& params, CriticHead head, Tape::Id input,
                   bool trainable, Reduce reduce);

/// y = r + gamma * (1 - done) * q_next, per row.
Tensor td_target(const Tensor& r, const Tensor& done, const Tensor& q_next, double gamma);

/// Mean squared error over both twins of both heads, summed. Gradients are
/// accumulated into the online critic buffers when `accumulate_grads`.
/// `include_sparse == false` restricts the loss to the dense head.
double critic_loss(CriticParams& params, const Tensor& obs, const Tensor& act,
                   const Tensor& y_dense, const Tensor& y_sparse, bool accumulate_grads,
                   bool include_sparse = true);

/// Hinge action distance d(a, a_hat) = max(0, Q(s,a_hat) - Q(s,a)), per row,
/// on the dense critic (numeric; a_hat and theta as constants).
Tensor hinge_distance(CriticParams& params, const Tensor& obs, const Tensor& a_hat,
                      const Tensor& a, Reduce reduce = Reduce::Min);

}  // namespace tsac
