#pragma once

// Central finite-difference gradient oracle used by the autodiff and
// trainer-loss tests. Kept independent of the tape's backward pass: it only
// re-evaluates a loss closure under elementwise perturbations.

#include <cmath>
#include <functional>
#include <vector>

#include "tsac/tensor.hpp"

namespace tsac_test {

inline constexpr double kFdStep = 1e-5;

/// d loss / d params by central differences, one entry per element of
/// `param`. The closure must re-evaluate the loss from current param values.
inline tsac::Tensor fd_gradient(tsac::Tensor& param, const std::function<double()>& loss,
                                double h = kFdStep) {
  tsac::Tensor g(param.rows(), param.cols());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double orig = param[i];
    param[i] = orig + h;
    const double up = loss();
    param[i] = orig - h;
    const double down = loss();
    param[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// Relative error between flattened gradient vectors:
/// ||a - b|| / max(||a||, ||b||, eps).
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nb), 1e-12});
  return std::sqrt(diff) / denom;
}

}  // namespace tsac_test
