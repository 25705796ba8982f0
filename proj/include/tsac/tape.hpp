#pragma once

#include <vector>

#include "tsac/tensor.hpp"

namespace tsac {

/// Reverse-mode autodiff on a per-forward-call tape. Nodes are created in
/// topological order by the op builders; backward() sweeps them in reverse.
/// The tape is meant to be built, differentiated once (or a few times) and
/// discarded; there is no persistent graph.
class Tape {
 public:
  using Id = int;

  /// Trainable leaf. The value is copied; after backward() the gradient is
  /// accumulated (+=) into `grad_sink` if one is given.
  Id leaf(const Tensor& value, Tensor* grad_sink = nullptr);

  /// Constant input; receives no gradient.
  Id constant(Tensor value);
  Id constant_scalar(double v) { return constant(Tensor::scalar(v)); }

  // --- ops ---------------------------------------------------------------
  Id matmul(Id a, Id b);           // [B,n] x [n,m] -> [B,m]
  Id add(Id a, Id b);              // same shape, or b a [1,C] row broadcast
  Id sub(Id a, Id b);              // same shape, or b a [1,C] row broadcast
  Id mul(Id a, Id b);              // elementwise; b may be a [1,C] row
  Id neg(Id a);
  Id scale(Id a, double k);
  Id add_scalar(Id a, double k);
  Id tanh_(Id a);
  Id exp_(Id a);
  Id log_(Id a);
  Id softplus(Id a);               // log(1 + e^x), overflow-safe
  Id square(Id a);
  Id relu(Id a);
  Id clamp(Id a, double lo, double hi);  // subgradient 1 inside [lo,hi], 0 outside
  Id emin(Id a, Id b);             // elementwise min; subgradient to the smaller (ties -> a)
  Id concat_cols(Id a, Id b);
  Id slice_cols(Id a, std::size_t c0, std::size_t c1);  // columns [c0, c1)
  Id sum_cols(Id a);               // [B,C] -> [B,1]
  Id sum_all(Id a);                // -> [1,1]
  Id mean_all(Id a);               // -> [1,1]
  Id stop_gradient(Id a);          // same value, treated as constant

  /// Accumulates d(loss)/d(node) into every node and leaf sink reachable
  /// from `loss`, which must be a scalar.
  void backward(Id loss);

  const Tensor& value(Id id) const { return nodes_[id].value; }
  /// Valid after backward(); zero tensor for nodes the loss does not reach.
  const Tensor& grad(Id id) const { return nodes_[id].grad; }

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  enum class Op {
    Leaf, Const, MatMul, Add, AddRow, Sub, SubRow, Mul, MulRow, Neg, Scale,
    AddScalar, Tanh, Exp, Log, Softplus, Square, Relu, Clamp, Min,
    ConcatCols, SliceCols, SumCols, SumAll, MeanAll,
  };

  struct Node {
    Tensor value;
    Tensor grad;
    Op op;
    Id a = -1;
    Id b = -1;
    double k0 = 0.0;
    double k1 = 0.0;
    Tensor* sink = nullptr;
  };

  Id push(Node n);
  Node& at(Id id) { return nodes_[id]; }

  std::vector<Node> nodes_;
};

// Dense matmul helpers shared with the tape backward pass.
void matmul_into(const Tensor& a, const Tensor& b, Tensor& out, bool accumulate);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T * b

}  // namespace tsac
