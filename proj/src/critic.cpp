#include "tsac/critic.hpp"

namespace tsac {

CriticParams CriticParams::make(std::size_t obs_dim, std::size_t act_dim,
                                const std::vector<std::size_t>& hidden, Rng& rng, double tau,
                                bool twin) {
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("CriticParams: tau must be in (0, 1]");
  std::vector<std::size_t> sizes;
  sizes.push_back(obs_dim + act_dim);
  for (std::size_t h : hidden) sizes.push_back(h);
  sizes.push_back(1);
  CriticParams p;
  p.tau = tau;
  p.twin = twin;
  p.dense1 = MlpParams::make(sizes, Activation::Tanh, rng);
  p.dense2 = MlpParams::make(sizes, Activation::Tanh, rng);
  p.sparse1 = MlpParams::make(sizes, Activation::Tanh, rng);
  p.sparse2 = MlpParams::make(sizes, Activation::Tanh, rng);
  p.t_dense1 = p.dense1;
  p.t_dense2 = p.dense2;
  p.t_sparse1 = p.sparse1;
  p.t_sparse2 = p.sparse2;
  return p;
}

namespace {
void polyak_one(MlpParams& target, MlpParams& online, double tau) {
  for (std::size_t k = 0; k < target.layers.size(); ++k) {
    auto blend = [tau](Tensor& t, const Tensor& o) {
      for (std::size_t i = 0; i < t.size(); ++i) t[i] = (1.0 - tau) * t[i] + tau * o[i];
    };
    blend(target.layers[k].w, online.layers[k].w);
    blend(target.layers[k].b, online.layers[k].b);
  }
}
}  // namespace

void CriticParams::polyak_update() {
  polyak_one(t_dense1, dense1, tau);
  polyak_one(t_dense2, dense2, tau);
  polyak_one(t_sparse1, sparse1, tau);
  polyak_one(t_sparse2, sparse2, tau);
}

void CriticParams::zero_grads(CriticHead head) {
  if (head == CriticHead::Dense) {
    dense1.zero_grads();
    dense2.zero_grads();
  } else {
    sparse1.zero_grads();
    sparse2.zero_grads();
  }
}

Tensor concat_obs_act(const Tensor& obs, const Tensor& act) {
  if (obs.rows() != act.rows()) throw DimensionError("concat_obs_act: row mismatch");
  Tensor out(obs.rows(), obs.cols() + act.cols());
  for (std::size_t i = 0; i < obs.rows(); ++i) {
    for (std::size_t j = 0; j < obs.cols(); ++j) out(i, j) = obs(i, j);
    for (std::size_t j = 0; j < act.cols(); ++j) out(i, obs.cols() + j) = act(i, j);
  }
  return out;
}

Tape::Id q_forward(Tape& tape, CriticParams& params, CriticHead head, Tape::Id input,
                   bool trainable, Reduce reduce) {
  MlpParams& q1 = head == CriticHead::Dense ? params.dense1 : params.sparse1;
  MlpParams& q2 = head == CriticHead::Dense ? params.dense2 : params.sparse2;
  Tape::Id o1 = mlp_forward(tape, q1, input, trainable);
  if (!params.twin || reduce == Reduce::First) return o1;
  Tape::Id o2 = mlp_forward(tape, q2, input, trainable);
  return tape.emin(o1, o2);
}

Tensor q_eval(CriticParams& params, const Tensor& obs, const Tensor& act, CriticHead head,
              bool use_target, Reduce reduce) {
  const Tensor input = concat_obs_act(obs, act);
  MlpParams* q1;
  MlpParams* q2;
  if (head == CriticHead::Dense) {
    q1 = use_target ? &params.t_dense1 : &params.dense1;
    q2 = use_target ? &params.t_dense2 : &params.dense2;
  } else {
    q1 = use_target ? &params.t_sparse1 : &params.sparse1;
    q2 = use_target ? &params.t_sparse2 : &params.sparse2;
  }
  Tensor v1 = mlp_eval(*q1, input);
  if (!params.twin || reduce == Reduce::First) return v1;
  Tensor v2 = mlp_eval(*q2, input);
  for (std::size_t i = 0; i < v1.size(); ++i) v1[i] = std::min(v1[i], v2[i]);
  return v1;
}

Tensor td_target(const Tensor& r, const Tensor& done, const Tensor& q_next, double gamma) {
  if (!r.same_shape(done) || !r.same_shape(q_next)) throw DimensionError("td_target: shape mismatch");
  Tensor y(r.rows(), r.cols());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = r[i] + gamma * (1.0 - done[i]) * q_next[i];
  }
  return y;
}

namespace {
double mse_head(Tape& tape, CriticParams& params, CriticHead head, Tape::Id input,
                const Tensor& y, bool accumulate_grads) {
  MlpParams& q1 = head == CriticHead::Dense ? params.dense1 : params.sparse1;
  MlpParams& q2 = head == CriticHead::Dense ? params.dense2 : params.sparse2;
  Tape::Id target = tape.constant(y);
  Tape::Id l1 = tape.mean_all(tape.square(tape.sub(mlp_forward(tape, q1, input, true), target)));
  Tape::Id loss = l1;
  if (params.twin) {
    Tape::Id l2 = tape.mean_all(tape.square(tape.sub(mlp_forward(tape, q2, input, true), target)));
    loss = tape.add(l1, l2);
  }
  const double value = tape.value(loss)[0];
  if (accumulate_grads) tape.backward(loss);
  return value;
}
}  // namespace

double critic_loss(CriticParams& params, const Tensor& obs, const Tensor& act,
                   const Tensor& y_dense, const Tensor& y_sparse, bool accumulate_grads,
                   bool include_sparse) {
  Tape tape;
  Tape::Id input = tape.constant(concat_obs_act(obs, act));
  double total = mse_head(tape, params, CriticHead::Dense, input, y_dense, accumulate_grads);
  if (include_sparse) {
    total += mse_head(tape, params, CriticHead::Sparse, input, y_sparse, accumulate_grads);
  }
  if (!std::isfinite(total)) throw TrainingError("critic_loss: non-finite loss");
  return total;
}

Tensor hinge_distance(CriticParams& params, const Tensor& obs, const Tensor& a_hat,
                      const Tensor& a, Reduce reduce) {
  Tensor q_hat = q_eval(params, obs, a_hat, CriticHead::Dense, false, reduce);
  Tensor q_a = q_eval(params, obs, a, CriticHead::Dense, false, reduce);
  Tensor d(q_hat.rows(), 1);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = std::max(0.0, q_hat[i] - q_a[i]);
  return d;
}

}  // namespace tsac
