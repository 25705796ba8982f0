#pragma once

#include "tsac/mlp.hpp"
#include "tsac/tensor.hpp"

namespace tsac {

/// How the correction is folded into the final action.
enum class CorrectionFnKind : std::uint8_t { SpDominated, AcpDominated, Equal, Softclip };

CorrectionFnKind correction_from_string(const std::string& s);
std::string to_string(CorrectionFnKind k);

/// Squashed-Gaussian policy head: the net emits (mean, log_std) per action
/// dimension; samples are A * tanh(mean + std * xi).
struct GaussianPolicy {
  MlpParams net;
  std::size_t act_dim = 0;
  double log_std_min = -10.0;
  double log_std_max = 2.0;

  static GaussianPolicy make(std::size_t in_dim, std::size_t act_dim,
                             const std::vector<std::size_t>& hidden, Rng& rng);
};

/// Graph handles for one reparameterized sample.
struct PolicySample {
  Tape::Id action;    // [B, act_dim], componentwise in (-A, A)
  Tape::Id log_prob;  // [B, 1], includes the tanh change-of-variables term
};

/// Records a reparameterized sample on the tape. `noise` is standard normal
/// [B, act_dim]; pass zeros for the deterministic (mean-action) mode.
PolicySample sample_on_tape(Tape& tape, GaussianPolicy& policy, Tape::Id input,
                            const Tensor& noise, double action_bound, bool trainable);

/// Correction function h on the tape; clip uses the pass-through
/// subgradient inside [-A, A].
Tape::Id correct_on_tape(Tape& tape, CorrectionFnKind kind, Tape::Id a_hat, Tape::Id delta_a,
                         double action_bound);

/// Numeric correction h(a_hat, delta_a).
Tensor correct(CorrectionFnKind kind, const Tensor& a_hat, const Tensor& delta_a,
               double action_bound);
double correct1(CorrectionFnKind kind, double a_hat, double delta_a, double action_bound);

Tensor sample_standard_normal(Rng& rng, std::size_t rows, std::size_t cols);

/// Numeric sampling results for rollouts and logging.
struct ActResult {
  Tensor a;         // executed action
  Tensor a_hat;     // SP proposal
  Tensor delta_a;   // ACP correction (zeros in mtsac mode)
  Tensor logp_sp;   // [B,1]
  Tensor logp_acp;  // [B,1]
};

/// SP sample only (numeric).
ActResult sp_sample(GaussianPolicy& sp, const Tensor& obs, Rng& rng, bool deterministic,
                    double action_bound);

/// ACP sample conditioned on (obs, a_hat) (numeric).
ActResult acp_sample(GaussianPolicy& acp, const Tensor& obs, const Tensor& a_hat, Rng& rng,
                     bool deterministic, double action_bound);

/// Full pipeline sp_sample -> acp_sample -> correct. When `mtsac` is set the
/// correction stage is skipped and a = a_hat.
ActResult compose_act(GaussianPolicy& sp, GaussianPolicy& acp, CorrectionFnKind kind,
                      const Tensor& obs, Rng& rng, bool deterministic, double action_bound,
                      bool mtsac = false);

}  // namespace tsac
