#pragma once

#include <functional>
#include <vector>

#include "reloc/tensor.hpp"

namespace reloc {

// Eager reverse-mode differentiation over a fixed, small primitive set.
// Anything bigger (attention, layer blocks, the confidence loss) is composed
// from these primitives so backward never needs special cases. Node indices
// are handed out in topological order, so backward is a single reverse scan.
class Tape {
 public:
  using Var = int;

  // Records a value. Gradients only flow into leaves created with
  // requires_grad=true; constant inputs (masks, data tokens) skip the
  // backward work entirely.
  Var leaf(Tensor value, bool requires_grad);

  Var matmul(Var a, Var b, bool ta = false, bool tb = false);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  // Broadcast a 1 x m row vector across every row of a.
  Var add_rowvec(Var a, Var r);
  Var mul_rowvec(Var a, Var r);
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var exp(Var a);
  Var log(Var a);
  Var sqrt(Var a);
  Var gelu(Var a);
  Var clamp(Var a, double lo, double hi);
  Var softmax_rows(Var a);
  // Zero mean, unit variance per row (no affine; compose with mul_rowvec /
  // add_rowvec for the learned gain and bias).
  Var layer_norm_rows(Var a);
  Var sum_all(Var a);
  Var sum_cols(Var a);  // n x m -> n x 1
  Var sum_rows(Var a);  // n x m -> 1 x m
  Var slice_cols(Var a, int c0, int width);
  Var concat_cols(const std::vector<Var>& parts);

  const Tensor& value(Var v) const { return nodes_[v].value; }
  // Valid after backward() for nodes on a differentiable path.
  const Tensor& grad(Var v) const;
  bool has_grad(Var v) const { return nodes_[v].grad_set; }

  // Seeds d(loss)/d(loss) = 1 and propagates to every leaf. loss must be 1x1.
  void backward(Var loss);

  void clear();
  size_t node_count() const { return nodes_.size(); }

  // Rounds every forward result through IEEE single precision (reduced
  // precision run mode). Off by default; oracles require full doubles.
  void set_round_f32(bool on) { round_f32_ = on; }
  // Extra per-op finiteness assertions for tests.
  void set_debug_checks(bool on) { debug_checks_ = on; }

 private:
  enum class Op {
    kLeaf, kMatMul, kAdd, kSub, kMul, kAddRow, kMulRow, kScale, kAddConst,
    kExp, kLog, kSqrt, kGelu, kClamp, kSoftmaxRows, kLayerNormRows,
    kSumAll, kSumCols, kSumRows, kSliceCols, kConcatCols,
  };

  struct Node {
    Op op;
    Tensor value;
    Tensor grad;
    Tensor aux;               // op-specific saved state (e.g. LN inv-std)
    std::vector<Var> parents;
    double c0 = 0.0, c1 = 0.0;
    int i0 = 0;
    bool t0 = false, t1 = false;
    bool requires_grad = false;
    bool grad_set = false;
  };

  Var push(Node n);
  Tensor& grad_buf(Var v);
  void backprop_node(Var v);

  std::vector<Node> nodes_;
  bool round_f32_ = false;
  bool debug_checks_ = false;
};

// Central finite-difference verification of a scalar-valued builder.
// The builder receives leaves created from `point` (all requires_grad) and
// returns the scalar output var. Relative error uses the
// max(1, |analytic|, |numeric|) denominator.
double grad_check(
    const std::function<Tape::Var(Tape&, const std::vector<Tape::Var>&)>& build,
    const std::vector<Tensor>& point, double h = 1e-5);

}  // namespace reloc
