#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "tsac/tape.hpp"
#include "tsac/tensor.hpp"

namespace tsac {

using Rng = std::mt19937_64;

enum class Activation : std::uint8_t { Tanh, Relu };

/// Fully-connected network parameters with paired gradient storage.
/// Hidden layers use `activation`; the output layer is linear.
struct MlpParams {
  struct Layer {
    Tensor w, b;    // w: [in, out], b: [1, out]
    Tensor gw, gb;  // gradient buffers, same shapes
  };

  std::vector<Layer> layers;
  Activation activation = Activation::Tanh;

  /// `sizes` lists every layer width, input and output included.
  /// Weights ~ U(-s, s) with s = 1/sqrt(fan_in); biases zero.
  static MlpParams make(const std::vector<std::size_t>& sizes, Activation act, Rng& rng);

  std::size_t in_dim() const { return layers.front().w.rows(); }
  std::size_t out_dim() const { return layers.back().w.cols(); }

  void zero_grads();
  void check_composable() const;

  template <typename Fn>
  void for_each_param(Fn&& fn) {
    for (Layer& l : layers) {
      fn(l.w, l.gw);
      fn(l.b, l.gb);
    }
  }
};

/// Records the forward pass on `tape`. When `trainable`, parameters are
/// registered as leaves whose gradients land in the MlpParams buffers;
/// otherwise they enter as constants.
Tape::Id mlp_forward(Tape& tape, MlpParams& params, Tape::Id input, bool trainable = true);

/// Plain numeric evaluation (scratch tape under the hood).
Tensor mlp_eval(MlpParams& params, const Tensor& input);

/// Adam first/second-moment state over one parameter container.
struct AdamState {
  std::vector<Tensor> m, v;  // aligned with the (w, b) traversal order
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lr = 3e-4;
  bool plain_sgd = false;  // fidelity mode: p -= lr * g, moments untouched

  static AdamState init(MlpParams& params, double lr);
  static AdamState init_scalar(double lr);  // for single-scalar parameters
};

/// One optimizer step over (param, grad) pairs. Throws TrainingError on a
/// non-finite gradient, naming the offending parameter index.
void adam_step(const std::vector<std::pair<Tensor*, const Tensor*>>& params, AdamState& state);

/// Convenience for a whole MLP.
void adam_step(MlpParams& params, AdamState& state);

}  // namespace tsac
