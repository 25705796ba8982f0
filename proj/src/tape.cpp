#include "tsac/tape.hpp"

#include <cmath>
#include <cstddef>

namespace tsac {

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::check_finite(const char* what) const {
  if (!all_finite()) {
    throw TrainingError(std::string("non-finite values in ") + what);
  }
}

void matmul_into(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (!accumulate) out.fill(0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  double* od = out.data().data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = ad + i * k;
    double* orow = od + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = bd + p * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
    }
  }
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  // out[i][j] = sum_p a[i][p] * b[j][p]
  Tensor out(a.rows(), b.rows());
  const std::size_t k = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      double s = 0.0;
      const double* arow = a.data().data() + i * k;
      const double* brow = b.data().data() + j * k;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      out(i, j) = s;
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  // out[i][j] = sum_p a[p][i] * b[p][j]
  Tensor out(a.cols(), b.cols());
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const double* arow = a.data().data() + p * a.cols();
    const double* brow = b.data().data() + p * b.cols();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* orow = out.data().data() + i * b.cols();
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

Tape::Id Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<Id>(nodes_.size() - 1);
}

Tape::Id Tape::leaf(const Tensor& value, Tensor* grad_sink) {
  Node n;
  n.op = Op::Leaf;
  n.value = value;
  n.sink = grad_sink;
  return push(std::move(n));
}

Tape::Id Tape::constant(Tensor value) {
  Node n;
  n.op = Op::Const;
  n.value = std::move(value);
  return push(std::move(n));
}

Tape::Id Tape::matmul(Id a, Id b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  if (ta.cols() != tb.rows()) {
    throw DimensionError("matmul: " + std::to_string(ta.cols()) + " != " + std::to_string(tb.rows()));
  }
  Node n;
  n.op = Op::MatMul;
  n.a = a;
  n.b = b;
  n.value = Tensor(ta.rows(), tb.cols());
  matmul_into(ta, tb, n.value, false);
  return push(std::move(n));
}

namespace {
void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch [" + std::to_string(a.rows()) + "," +
                         std::to_string(a.cols()) + "] vs [" + std::to_string(b.rows()) + "," +
                         std::to_string(b.cols()) + "]");
  }
}
bool is_row_broadcast(const Tensor& a, const Tensor& b) {
  return b.rows() == 1 && a.rows() != 1 && a.cols() == b.cols();
}
}  // namespace

Tape::Id Tape::add(Id a, Id b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  Node n;
  n.a = a;
  n.b = b;
  n.value = ta;
  if (is_row_broadcast(ta, tb)) {
    n.op = Op::AddRow;
    for (std::size_t i = 0; i < ta.rows(); ++i)
      for (std::size_t j = 0; j < ta.cols(); ++j) n.value(i, j) += tb(0, j);
  } else {
    require_same(ta, tb, "add");
    n.op = Op::Add;
    for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] += tb[i];
  }
  return push(std::move(n));
}

Tape::Id Tape::sub(Id a, Id b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  Node n;
  n.a = a;
  n.b = b;
  n.value = ta;
  if (is_row_broadcast(ta, tb)) {
    n.op = Op::SubRow;
    for (std::size_t i = 0; i < ta.rows(); ++i)
      for (std::size_t j = 0; j < ta.cols(); ++j) n.value(i, j) -= tb(0, j);
  } else {
    require_same(ta, tb, "sub");
    n.op = Op::Sub;
    for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] -= tb[i];
  }
  return push(std::move(n));
}

Tape::Id Tape::mul(Id a, Id b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  Node n;
  n.a = a;
  n.b = b;
  n.value = ta;
  if (is_row_broadcast(ta, tb)) {
    n.op = Op::MulRow;
    for (std::size_t i = 0; i < ta.rows(); ++i)
      for (std::size_t j = 0; j < ta.cols(); ++j) n.value(i, j) *= tb(0, j);
  } else {
    require_same(ta, tb, "mul");
    n.op = Op::Mul;
    for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] *= tb[i];
  }
  return push(std::move(n));
}

Tape::Id Tape::neg(Id a) {
  Node n;
  n.op = Op::Neg;
  n.a = a;
  n.value = at(a).value;
  for (double& v : n.value.data()) v = -v;
  return push(std::move(n));
}

Tape::Id Tape::scale(Id a, double k) {
  Node n;
  n.op = Op::Scale;
  n.a = a;
  n.k0 = k;
  n.value = at(a).value;
  for (double& v : n.value.data()) v *= k;
  return push(std::move(n));
}

Tape::Id Tape::add_scalar(Id a, double k) {
  Node n;
  n.op = Op::AddScalar;
  n.a = a;
  n.k0 = k;
  n.value = at(a).value;
  for (double& v : n.value.data()) v += k;
  return push(std::move(n));
}

Tape::Id Tape::tanh_(Id a) {
  Node n;
  n.op = Op::Tanh;
  n.a = a;
  n.value = at(a).value;
  for (double& v : n.value.data()) v = std::tanh(v);
  return push(std::move(n));
}

Tape::Id Tape::exp_(Id a) {
  Node n;
  n.op = Op::Exp;
  n.a = a;
  n.value = at(a).value;
  for (double& v : n.value.data()) v = std::exp(v);
  return push(std::move(n));
}

Tape::Id Tape::log_(Id a) {
  Node n;
  n.op = Op::Log;
  n.a = a;
  n.value = at(a).value;
  for (double& v : n.value.data()) v = std::log(v);
  return push(std::move(n));
}

Tape::Id Tape::softplus(Id a) {
  Node n;
  n.op = Op::Softplus;
  n.a = a;
  n.value = at(a).value;
  for (double& v : n.value.data()) v = v > 30.0 ? v : std::log1p(std::exp(v));
  return push(std::move(n));
}

Tape::Id Tape::square(Id a) {
  Node n;
  n.op = Op::Square;
  n.a = a;
  n.value = at(a).value;
  for (double& v : n.value.data()) v = v * v;
  return push(std::move(n));
}

Tape::Id Tape::relu(Id a) {
  Node n;
  n.op = Op::Relu;
  n.a = a;
  n.value = at(a).value;
  for (double& v : n.value.data()) v = v > 0.0 ? v : 0.0;
  return push(std::move(n));
}

Tape::Id Tape::clamp(Id a, double lo, double hi) {
  Node n;
  n.op = Op::Clamp;
  n.a = a;
  n.k0 = lo;
  n.k1 = hi;
  n.value = at(a).value;
  for (double& v : n.value.data()) v = v < lo ? lo : (v > hi ? hi : v);
  return push(std::move(n));
}

Tape::Id Tape::emin(Id a, Id b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  require_same(ta, tb, "emin");
  Node n;
  n.op = Op::Min;
  n.a = a;
  n.b = b;
  n.value = ta;
  for (std::size_t i = 0; i < ta.size(); ++i) n.value[i] = ta[i] <= tb[i] ? ta[i] : tb[i];
  return push(std::move(n));
}

Tape::Id Tape::concat_cols(Id a, Id b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  if (ta.rows() != tb.rows()) throw DimensionError("concat_cols: row mismatch");
  Node n;
  n.op = Op::ConcatCols;
  n.a = a;
  n.b = b;
  n.value = Tensor(ta.rows(), ta.cols() + tb.cols());
  for (std::size_t i = 0; i < ta.rows(); ++i) {
    for (std::size_t j = 0; j < ta.cols(); ++j) n.value(i, j) = ta(i, j);
    for (std::size_t j = 0; j < tb.cols(); ++j) n.value(i, ta.cols() + j) = tb(i, j);
  }
  return push(std::move(n));
}

Tape::Id Tape::slice_cols(Id a, std::size_t c0, std::size_t c1) {
  const Tensor& ta = at(a).value;
  if (c0 >= c1 || c1 > ta.cols()) throw DimensionError("slice_cols: bad range");
  Node n;
  n.op = Op::SliceCols;
  n.a = a;
  n.k0 = static_cast<double>(c0);
  n.k1 = static_cast<double>(c1);
  n.value = Tensor(ta.rows(), c1 - c0);
  for (std::size_t i = 0; i < ta.rows(); ++i)
    for (std::size_t j = c0; j < c1; ++j) n.value(i, j - c0) = ta(i, j);
  return push(std::move(n));
}

Tape::Id Tape::sum_cols(Id a) {
  const Tensor& ta = at(a).value;
  Node n;
  n.op = Op::SumCols;
  n.a = a;
  n.value = Tensor(ta.rows(), 1);
  for (std::size_t i = 0; i < ta.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < ta.cols(); ++j) s += ta(i, j);
    n.value(i, 0) = s;
  }
  return push(std::move(n));
}

Tape::Id Tape::sum_all(Id a) {
  const Tensor& ta = at(a).value;
  double s = 0.0;
  for (double v : ta.data()) s += v;
  Node n;
  n.op = Op::SumAll;
  n.a = a;
  n.value = Tensor::scalar(s);
  return push(std::move(n));
}

Tape::Id Tape::mean_all(Id a) {
  const Tensor& ta = at(a).value;
  double s = 0.0;
  for (double v : ta.data()) s += v;
  Node n;
  n.op = Op::MeanAll;
  n.a = a;
  n.value = Tensor::scalar(s / static_cast<double>(ta.size()));
  return push(std::move(n));
}

Tape::Id Tape::stop_gradient(Id a) { return constant(at(a).value); }

void Tape::backward(Id loss) {
  if (!at(loss).value.is_scalar()) {
    throw Error("backward: loss must be a scalar");
  }
  // Internal adjoints are reset on every call so repeated backward sweeps on
  // one tape stay independent; only the external leaf sinks accumulate.
  for (Node& n : nodes_) {
    if (n.grad.size() != n.value.size()) {
      n.grad = Tensor(n.value.rows(), n.value.cols());
    } else {
      n.grad.fill(0.0);
    }
  }
  at(loss).grad[0] += 1.0;

  for (Id id = loss; id >= 0; --id) {
    Node& n = at(id);
    const Tensor& g = n.grad;
    bool any = false;
    for (double v : g.data()) {
      if (v != 0.0) { any = true; break; }
    }
    if (!any) continue;
    switch (n.op) {
      case Op::Leaf:
        if (n.sink) {
          Tensor& s = *n.sink;
          for (std::size_t i = 0; i < s.size(); ++i) s[i] += g[i];
        }
        break;
      case Op::Const:
        break;
      case Op::MatMul: {
        Node& na = at(n.a);
        Node& nb = at(n.b);
        Tensor da = matmul_nt(g, nb.value);
        for (std::size_t i = 0; i < da.size(); ++i) na.grad[i] += da[i];
        Tensor db = matmul_tn(na.value, g);
        for (std::size_t i = 0; i < db.size(); ++i) nb.grad[i] += db[i];
        break;
      }
      case Op::Add: {
        Tensor& ga = at(n.a).grad;
        Tensor& gb = at(n.b).grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] += g[i];
        }
        break;
      }
      case Op::AddRow: {
        Tensor& ga = at(n.a).grad;
        Tensor& gb = at(n.b).grad;
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) {
            ga(i, j) += g(i, j);
            gb(0, j) += g(i, j);
          }
        break;
      }
      case Op::Sub: {
        Tensor& ga = at(n.a).grad;
        Tensor& gb = at(n.b).grad;
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] += g[i];
          gb[i] -= g[i];
        }
        break;
      }
      case Op::SubRow: {
        Tensor& ga = at(n.a).grad;
        Tensor& gb = at(n.b).grad;
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) {
            ga(i, j) += g(i, j);
            gb(0, j) -= g(i, j);
          }
        break;
      }
      case Op::Mul: {
        Node& na = at(n.a);
        Node& nb = at(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          na.grad[i] += g[i] * nb.value[i];
          nb.grad[i] += g[i] * na.value[i];
        }
        break;
      }
      case Op::MulRow: {
        Node& na = at(n.a);
        Node& nb = at(n.b);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) {
            na.grad(i, j) += g(i, j) * nb.value(0, j);
            nb.grad(0, j) += g(i, j) * na.value(i, j);
          }
        break;
      }
      case Op::Neg: {
        Tensor& ga = at(n.a).grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] -= g[i];
        break;
      }
      case Op::Scale: {
        Tensor& ga = at(n.a).grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.k0;
        break;
      }
      case Op::AddScalar: {
        Tensor& ga = at(n.a).grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        break;
      }
      case Op::Tanh: {
        Tensor& ga = at(n.a).grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.value[i] * n.value[i]);
        break;
      }
      case Op::Exp: {
        Tensor& ga = at(n.a).grad;
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.value[i];
        break;
      }
      case Op::Log: {
        Node& na = at(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i] / na.value[i];
        break;
      }
      case Op::Softplus: {
        Node& na = at(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = na.value[i];
          na.grad[i] += g[i] / (1.0 + std::exp(-x));
        }
        break;
      }
      case Op::Square: {
        Node& na = at(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i] * 2.0 * na.value[i];
        break;
      }
      case Op::Relu: {
        Node& na = at(n.a);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (na.value[i] > 0.0) na.grad[i] += g[i];
        break;
      }
      case Op::Clamp: {
        Node& na = at(n.a);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = na.value[i];
          if (x >= n.k0 && x <= n.k1) na.grad[i] += g[i];
        }
        break;
      }
      case Op::Min: {
        Node& na = at(n.a);
        Node& nb = at(n.b);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (na.value[i] <= nb.value[i])
            na.grad[i] += g[i];
          else
            nb.grad[i] += g[i];
        }
        break;
      }
      case Op::ConcatCols: {
        Node& na = at(n.a);
        Node& nb = at(n.b);
        const std::size_t ca = na.value.cols();
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < ca; ++j) na.grad(i, j) += g(i, j);
          for (std::size_t j = 0; j < nb.value.cols(); ++j) nb.grad(i, j) += g(i, ca + j);
        }
        break;
      }
      case Op::SliceCols: {
        Node& na = at(n.a);
        const std::size_t c0 = static_cast<std::size_t>(n.k0);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) na.grad(i, c0 + j) += g(i, j);
        break;
      }
      case Op::SumCols: {
        Node& na = at(n.a);
        for (std::size_t i = 0; i < na.value.rows(); ++i)
          for (std::size_t j = 0; j < na.value.cols(); ++j) na.grad(i, j) += g(i, 0);
        break;
      }
      case Op::SumAll: {
        Node& na = at(n.a);
        for (std::size_t i = 0; i < na.grad.size(); ++i) na.grad[i] += g[0];
        break;
      }
      case Op::MeanAll: {
        Node& na = at(n.a);
        const double k = g[0] / static_cast<double>(na.value.size());
        for (std::size_t i = 0; i < na.grad.size(); ++i) na.grad[i] += k;
        break;
      }
    }
  }
}

}  // namespace tsac
