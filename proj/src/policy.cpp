#include "tsac/policy.hpp"

#include <cmath>
#include <numbers>

namespace tsac {

CorrectionFnKind correction_from_string(const std::string& s) {
  if (s == "sp_dominated") return CorrectionFnKind::SpDominated;
  if (s == "acp_dominated") return CorrectionFnKind::AcpDominated;
  if (s == "equal") return CorrectionFnKind::Equal;
  if (s == "softclip") return CorrectionFnKind::Softclip;
  throw ConfigError("unknown correction_fn '" + s +
                    "' (known: sp_dominated, acp_dominated, equal, softclip)");
}

std::string to_string(CorrectionFnKind k) {
  switch (k) {
    case CorrectionFnKind::SpDominated: return "sp_dominated";
    case CorrectionFnKind::AcpDominated: return "acp_dominated";
    case CorrectionFnKind::Equal: return "equal";
    case CorrectionFnKind::Softclip: return "softclip";
  }
  return "?";
}

GaussianPolicy GaussianPolicy::make(std::size_t in_dim, std::size_t act_dim,
                                    const std::vector<std::size_t>& hidden, Rng& rng) {
  std::vector<std::size_t> sizes;
  sizes.push_back(in_dim);
  for (std::size_t h : hidden) sizes.push_back(h);
  sizes.push_back(2 * act_dim);
  GaussianPolicy p;
  p.net = MlpParams::make(sizes, Activation::Tanh, rng);
  p.act_dim = act_dim;
  return p;
}

PolicySample sample_on_tape(Tape& tape, GaussianPolicy& policy, Tape::Id input,
                            const Tensor& noise, double action_bound, bool trainable) {
  const std::size_t ad = policy.act_dim;
  const std::size_t batch = tape.value(input).rows();
  if (noise.rows() != batch || noise.cols() != ad) {
    throw DimensionError("sample_on_tape: noise shape mismatch");
  }
  Tape::Id out = mlp_forward(tape, policy.net, input, trainable);
  if (!tape.value(out).all_finite()) {
    throw TrainingError("policy network produced non-finite output");
  }
  Tape::Id mean = tape.slice_cols(out, 0, ad);
  Tape::Id log_std = tape.clamp(tape.slice_cols(out, ad, 2 * ad), policy.log_std_min,
                                policy.log_std_max);
  Tape::Id std_ = tape.exp_(log_std);
  Tape::Id xi = tape.constant(noise);
  Tape::Id u = tape.add(mean, tape.mul(std_, xi));
  Tape::Id action = tape.scale(tape.tanh_(u), action_bound);

  // Per-dim log density of the squashed sample. The Gaussian exponent is a
  // constant (it is exactly -xi^2/2 under reparameterization); log|da/du|
  // uses the stable identity log(1 - tanh(u)^2) = 2(log 2 - u - softplus(-2u)).
  Tensor base(batch, ad);
  const double c = -0.5 * std::log(2.0 * std::numbers::pi) - std::log(action_bound);
  for (std::size_t i = 0; i < base.size(); ++i) {
    base[i] = c - 0.5 * noise[i] * noise[i];
  }
  Tape::Id sq = tape.scale(
      tape.add_scalar(tape.sub(tape.neg(u), tape.softplus(tape.scale(u, -2.0))), std::numbers::ln2),
      2.0);
  Tape::Id per_dim = tape.sub(tape.sub(tape.constant(std::move(base)), log_std), sq);
  return PolicySample{action, tape.sum_cols(per_dim)};
}

Tape::Id correct_on_tape(Tape& tape, CorrectionFnKind kind, Tape::Id a_hat, Tape::Id delta_a,
                         double action_bound) {
  const double A = action_bound;
  switch (kind) {
    case CorrectionFnKind::SpDominated:
      return tape.clamp(tape.add(tape.scale(a_hat, 2.0), delta_a), -A, A);
    case CorrectionFnKind::AcpDominated:
      return tape.clamp(tape.add(a_hat, tape.scale(delta_a, 2.0)), -A, A);
    case CorrectionFnKind::Equal:
      return tape.clamp(tape.add(a_hat, delta_a), -A, A);
    case CorrectionFnKind::Softclip:
      return tape.scale(tape.tanh_(tape.scale(tape.add(tape.scale(a_hat, 2.0), delta_a), 1.0 / A)), A);
  }
  throw Error("correct_on_tape: unreachable");
}

double correct1(CorrectionFnKind kind, double a_hat, double delta_a, double A) {
  auto clip = [A](double x) { return x < -A ? -A : (x > A ? A : x); };
  switch (kind) {
    case CorrectionFnKind::SpDominated: return clip(2.0 * a_hat + delta_a);
    case CorrectionFnKind::AcpDominated: return clip(a_hat + 2.0 * delta_a);
    case CorrectionFnKind::Equal: return clip(a_hat + delta_a);
    case CorrectionFnKind::Softclip: return A * std::tanh((2.0 * a_hat + delta_a) / A);
  }
  return 0.0;
}

Tensor correct(CorrectionFnKind kind, const Tensor& a_hat, const Tensor& delta_a, double A) {
  if (!a_hat.same_shape(delta_a)) throw DimensionError("correct: shape mismatch");
  Tensor out(a_hat.rows(), a_hat.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = correct1(kind, a_hat[i], delta_a[i], A);
  return out;
}

Tensor sample_standard_normal(Rng& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

namespace {
ActResult sample_numeric(GaussianPolicy& policy, const Tensor& input, Rng& rng, bool deterministic,
                         double A) {
  Tensor noise = deterministic ? Tensor(input.rows(), policy.act_dim)
                               : sample_standard_normal(rng, input.rows(), policy.act_dim);
  Tape tape;
  PolicySample s = sample_on_tape(tape, policy, tape.constant(input), noise, A, false);
  ActResult r;
  r.a = tape.value(s.action);
  r.logp_sp = tape.value(s.log_prob);
  return r;
}
}  // namespace

ActResult sp_sample(GaussianPolicy& sp, const Tensor& obs, Rng& rng, bool deterministic,
                    double action_bound) {
  ActResult r = sample_numeric(sp, obs, rng, deterministic, action_bound);
  r.a_hat = r.a;
  return r;
}

ActResult acp_sample(GaussianPolicy& acp, const Tensor& obs, const Tensor& a_hat, Rng& rng,
                     bool deterministic, double action_bound) {
  Tensor input(obs.rows(), obs.cols() + a_hat.cols());
  for (std::size_t i = 0; i < obs.rows(); ++i) {
    for (std::size_t j = 0; j < obs.cols(); ++j) input(i, j) = obs(i, j);
    for (std::size_t j = 0; j < a_hat.cols(); ++j) input(i, obs.cols() + j) = a_hat(i, j);
  }
  ActResult r = sample_numeric(acp, input, rng, deterministic, action_bound);
  r.delta_a = r.a;
  r.logp_acp = r.logp_sp;
  r.logp_sp = Tensor();
  return r;
}

ActResult compose_act(GaussianPolicy& sp, GaussianPolicy& acp, CorrectionFnKind kind,
                      const Tensor& obs, Rng& rng, bool deterministic, double action_bound,
                      bool mtsac) {
  ActResult s = sp_sample(sp, obs, rng, deterministic, action_bound);
  ActResult out;
  out.a_hat = s.a_hat;
  out.logp_sp = s.logp_sp;
  if (mtsac) {
    out.a = s.a_hat;
    out.delta_a = Tensor(obs.rows(), sp.act_dim);
    out.logp_acp = Tensor(obs.rows(), 1);
    return out;
  }
  ActResult c = acp_sample(acp, obs, s.a_hat, rng, deterministic, action_bound);
  out.delta_a = c.delta_a;
  out.logp_acp = c.logp_acp;
  out.a = correct(kind, out.a_hat, out.delta_a, action_bound);
  return out;
}

}  // namespace tsac
