#include "tsac/mlp.hpp"

#include <cmath>

namespace tsac {

MlpParams MlpParams::make(const std::vector<std::size_t>& sizes, Activation act, Rng& rng) {
  if (sizes.size() < 2) throw DimensionError("MlpParams::make: need at least in and out sizes");
  MlpParams p;
  p.activation = act;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    const std::size_t in = sizes[k], out = sizes[k + 1];
    Layer l{Tensor(in, out), Tensor(1, out), Tensor(in, out), Tensor(1, out)};
    const double s = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-s, s);
    for (double& w : l.w.data()) w = dist(rng);
    p.layers.push_back(std::move(l));
  }
  p.check_composable();
  return p;
}

void MlpParams::zero_grads() {
  for (Layer& l : layers) {
    l.gw.fill(0.0);
    l.gb.fill(0.0);
  }
}

void MlpParams::check_composable() const {
  for (std::size_t k = 0; k + 1 < layers.size(); ++k) {
    if (layers[k].w.cols() != layers[k + 1].w.rows()) {
      throw DimensionError("MlpParams: layer " + std::to_string(k) + " out-dim " +
                           std::to_string(layers[k].w.cols()) + " != layer " +
                           std::to_string(k + 1) + " in-dim " +
                           std::to_string(layers[k + 1].w.rows()));
    }
  }
  for (const Layer& l : layers) {
    if (l.gw.rows() != l.w.rows() || l.gw.cols() != l.w.cols() || l.gb.cols() != l.b.cols()) {
      throw DimensionError("MlpParams: gradient buffer shape mismatch");
    }
  }
}

Tape::Id mlp_forward(Tape& tape, MlpParams& params, Tape::Id input, bool trainable) {
  if (tape.value(input).cols() != params.in_dim()) {
    throw DimensionError("mlp_forward: input cols " + std::to_string(tape.value(input).cols()) +
                         " != net in-dim " + std::to_string(params.in_dim()));
  }
  Tape::Id x = input;
  for (std::size_t k = 0; k < params.layers.size(); ++k) {
    MlpParams::Layer& l = params.layers[k];
    Tape::Id w = trainable ? tape.leaf(l.w, &l.gw) : tape.constant(l.w);
    Tape::Id b = trainable ? tape.leaf(l.b, &l.gb) : tape.constant(l.b);
    x = tape.add(tape.matmul(x, w), b);
    if (k + 1 < params.layers.size()) {
      x = params.activation == Activation::Tanh ? tape.tanh_(x) : tape.relu(x);
    }
  }
  return x;
}

Tensor mlp_eval(MlpParams& params, const Tensor& input) {
  Tape tape;
  return tape.value(mlp_forward(tape, params, tape.constant(input), /*trainable=*/false));
}

AdamState AdamState::init(MlpParams& params, double lr) {
  AdamState s;
  s.lr = lr;
  params.for_each_param([&](Tensor& p, Tensor&) {
    s.m.emplace_back(p.rows(), p.cols());
    s.v.emplace_back(p.rows(), p.cols());
  });
  return s;
}

AdamState AdamState::init_scalar(double lr) {
  AdamState s;
  s.lr = lr;
  s.m.emplace_back(1, 1);
  s.v.emplace_back(1, 1);
  return s;
}

void adam_step(const std::vector<std::pair<Tensor*, const Tensor*>>& params, AdamState& state) {
  if (params.size() != state.m.size()) {
    throw DimensionError("adam_step: state holds " + std::to_string(state.m.size()) +
                         " buffers for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].second->all_finite()) {
      throw TrainingError("adam_step: non-finite gradient in parameter block " + std::to_string(i) +
                          " at step " + std::to_string(state.step + 1));
    }
  }
  state.step += 1;
  if (state.plain_sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& p = *params[i].first;
      const Tensor& g = *params[i].second;
      for (std::size_t j = 0; j < p.size(); ++j) p[j] -= state.lr * g[j];
    }
    return;
  }
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i].first;
    const Tensor& g = *params[i].second;
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

void adam_step(MlpParams& params, AdamState& state) {
  std::vector<std::pair<Tensor*, const Tensor*>> pg;
  params.for_each_param([&](Tensor& p, Tensor& g) { pg.emplace_back(&p, &g); });
  adam_step(pg, state);
}

}  // namespace tsac
