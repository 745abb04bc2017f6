#include "reloc/tape.hpp"

#include <Eigen/Core>
#include <cassert>
#include <cmath>
#include <numbers>
#include <unsupported/Eigen/SpecialFunctions>

namespace reloc {

namespace {
constexpr double kLayerNormEps = 1e-10;
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

using ArrayMap = Eigen::Map<Eigen::ArrayXd>;
using ConstArrayMap = Eigen::Map<const Eigen::ArrayXd>;
}  // namespace

Tape::Var Tape::push(Node n) {
  for (Var p : n.parents) {
    assert(p >= 0 && p < static_cast<Var>(nodes_.size()));
    n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  }
  if (round_f32_) round_to_f32(n.value);
  if (debug_checks_) assert(n.value.all_finite());
  nodes_.push_back(std::move(n));
  return static_cast<Var>(nodes_.size()) - 1;
}

Tape::Var Tape::leaf(Tensor value, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  return push(std::move(n));
}

Tape::Var Tape::matmul(Var a, Var b, bool ta, bool tb) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  Node n;
  n.op = Op::kMatMul;
  n.value = reloc::matmul(A, B, ta, tb);
  n.parents = {a, b};
  n.t0 = ta;
  n.t1 = tb;
  return push(std::move(n));
}

Tape::Var Tape::add(Var a, Var b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  assert(A.same_shape(B));
  Node n;
  n.op = Op::kAdd;
  n.value = A;
  for (size_t i = 0; i < B.size(); ++i) n.value.data[i] += B.data[i];
  n.parents = {a, b};
  return push(std::move(n));
}

Tape::Var Tape::sub(Var a, Var b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  assert(A.same_shape(B));
  Node n;
  n.op = Op::kSub;
  n.value = A;
  for (size_t i = 0; i < B.size(); ++i) n.value.data[i] -= B.data[i];
  n.parents = {a, b};
  return push(std::move(n));
}

Tape::Var Tape::mul(Var a, Var b) {
  const Tensor& A = nodes_[a].value;
  const Tensor& B = nodes_[b].value;
  assert(A.same_shape(B));
  Node n;
  n.op = Op::kMul;
  n.value = A;
  for (size_t i = 0; i < B.size(); ++i) n.value.data[i] *= B.data[i];
  n.parents = {a, b};
  return push(std::move(n));
}

Tape::Var Tape::add_rowvec(Var a, Var r) {
  const Tensor& A = nodes_[a].value;
  const Tensor& R = nodes_[r].value;
  assert(R.rows == 1 && R.cols == A.cols);
  Node n;
  n.op = Op::kAddRow;
  n.value = A;
  for (int i = 0; i < A.rows; ++i) {
    double* row = n.value.row(i);
    for (int j = 0; j < A.cols; ++j) row[j] += R.data[j];
  }
  n.parents = {a, r};
  return push(std::move(n));
}

Tape::Var Tape::mul_rowvec(Var a, Var r) {
  const Tensor& A = nodes_[a].value;
  const Tensor& R = nodes_[r].value;
  assert(R.rows == 1 && R.cols == A.cols);
  Node n;
  n.op = Op::kMulRow;
  n.value = A;
  for (int i = 0; i < A.rows; ++i) {
    double* row = n.value.row(i);
    for (int j = 0; j < A.cols; ++j) row[j] *= R.data[j];
  }
  n.parents = {a, r};
  return push(std::move(n));
}

Tape::Var Tape::scale(Var a, double c) {
  Node n;
  n.op = Op::kScale;
  n.value = nodes_[a].value;
  for (auto& v : n.value.data) v *= c;
  n.parents = {a};
  n.c0 = c;
  return push(std::move(n));
}

Tape::Var Tape::add_const(Var a, double c) {
  Node n;
  n.op = Op::kAddConst;
  n.value = nodes_[a].value;
  for (auto& v : n.value.data) v += c;
  n.parents = {a};
  n.c0 = c;
  return push(std::move(n));
}

Tape::Var Tape::exp(Var a) {
  Node n;
  n.op = Op::kExp;
  n.value = nodes_[a].value;
  ArrayMap v(n.value.data.data(), static_cast<Eigen::Index>(n.value.size()));
  v = v.exp();
  n.parents = {a};
  return push(std::move(n));
}

Tape::Var Tape::log(Var a) {
  Node n;
  n.op = Op::kLog;
  n.value = nodes_[a].value;
  for (auto& v : n.value.data) v = std::log(v);
  n.parents = {a};
  return push(std::move(n));
}

Tape::Var Tape::sqrt(Var a) {
  Node n;
  n.op = Op::kSqrt;
  n.value = nodes_[a].value;
  for (auto& v : n.value.data) v = std::sqrt(v);
  n.parents = {a};
  return push(std::move(n));
}

Tape::Var Tape::gelu(Var a) {
  Node n;
  n.op = Op::kGelu;
  n.value = nodes_[a].value;
  ArrayMap v(n.value.data.data(), static_cast<Eigen::Index>(n.value.size()));
  v = 0.5 * v * (1.0 + (v * kInvSqrt2).erf());
  n.parents = {a};
  return push(std::move(n));
}

Tape::Var Tape::clamp(Var a, double lo, double hi) {
  assert(lo < hi);
  Node n;
  n.op = Op::kClamp;
  n.value = nodes_[a].value;
  for (auto& v : n.value.data) v = std::min(hi, std::max(lo, v));
  n.parents = {a};
  n.c0 = lo;
  n.c1 = hi;
  return push(std::move(n));
}

Tape::Var Tape::softmax_rows(Var a) {
  const Tensor& A = nodes_[a].value;
  Node n;
  n.op = Op::kSoftmaxRows;
  n.value = A;
  for (int i = 0; i < A.rows; ++i) {
    ArrayMap row(n.value.row(i), A.cols);
    row = (row - row.maxCoeff()).exp();
    row *= 1.0 / row.sum();
  }
  n.parents = {a};
  return push(std::move(n));
}

Tape::Var Tape::layer_norm_rows(Var a) {
  const Tensor& A = nodes_[a].value;
  Node n;
  n.op = Op::kLayerNormRows;
  n.value = A;
  n.aux = Tensor(A.rows, 1);
  for (int i = 0; i < A.rows; ++i) {
    double* row = n.value.row(i);
    double mean = 0.0;
    for (int j = 0; j < A.cols; ++j) mean += row[j];
    mean /= A.cols;
    double var = 0.0;
    for (int j = 0; j < A.cols; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= A.cols;
    const double inv_std = 1.0 / std::sqrt(var + kLayerNormEps);
    n.aux.data[i] = inv_std;
    for (int j = 0; j < A.cols; ++j) row[j] = (row[j] - mean) * inv_std;
  }
  n.parents = {a};
  return push(std::move(n));
}

Tape::Var Tape::sum_all(Var a) {
  const Tensor& A = nodes_[a].value;
  double s = 0.0;
  for (double v : A.data) s += v;
  Node n;
  n.op = Op::kSumAll;
  n.value = Tensor::scalar(s);
  n.parents = {a};
  return push(std::move(n));
}

Tape::Var Tape::sum_cols(Var a) {
  const Tensor& A = nodes_[a].value;
  Node n;
  n.op = Op::kSumCols;
  n.value = Tensor(A.rows, 1);
  for (int i = 0; i < A.rows; ++i) {
    const double* row = A.row(i);
    double s = 0.0;
    for (int j = 0; j < A.cols; ++j) s += row[j];
    n.value.data[i] = s;
  }
  n.parents = {a};
  return push(std::move(n));
}

Tape::Var Tape::sum_rows(Var a) {
  const Tensor& A = nodes_[a].value;
  Node n;
  n.op = Op::kSumRows;
  n.value = Tensor(1, A.cols);
  for (int i = 0; i < A.rows; ++i) {
    const double* row = A.row(i);
    for (int j = 0; j < A.cols; ++j) n.value.data[j] += row[j];
  }
  n.parents = {a};
  return push(std::move(n));
}

Tape::Var Tape::slice_cols(Var a, int c0, int width) {
  const Tensor& A = nodes_[a].value;
  assert(c0 >= 0 && width >= 1 && c0 + width <= A.cols);
  Node n;
  n.op = Op::kSliceCols;
  n.value = Tensor(A.rows, width);
  for (int i = 0; i < A.rows; ++i) {
    const double* src = A.row(i) + c0;
    double* dst = n.value.row(i);
    for (int j = 0; j < width; ++j) dst[j] = src[j];
  }
  n.parents = {a};
  n.i0 = c0;
  return push(std::move(n));
}

Tape::Var Tape::concat_cols(const std::vector<Var>& parts) {
  assert(!parts.empty());
  int total = 0;
  const int rows = nodes_[parts[0]].value.rows;
  for (Var p : parts) {
    assert(nodes_[p].value.rows == rows);
    total += nodes_[p].value.cols;
  }
  Node n;
  n.op = Op::kConcatCols;
  n.value = Tensor(rows, total);
  int off = 0;
  for (Var p : parts) {
    const Tensor& P = nodes_[p].value;
    for (int i = 0; i < rows; ++i) {
      const double* src = P.row(i);
      double* dst = n.value.row(i) + off;
      for (int j = 0; j < P.cols; ++j) dst[j] = src[j];
    }
    off += P.cols;
  }
  n.parents = parts;
  return push(std::move(n));
}

const Tensor& Tape::grad(Var v) const {
  assert(nodes_[v].grad_set);
  return nodes_[v].grad;
}

Tensor& Tape::grad_buf(Var v) {
  Node& n = nodes_[v];
  if (!n.grad_set) {
    n.grad = Tensor(n.value.rows, n.value.cols);
    n.grad_set = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  assert(nodes_[loss].value.rows == 1 && nodes_[loss].value.cols == 1);
  grad_buf(loss).data[0] = 1.0;
  for (Var v = loss; v >= 0; --v) {
    if (!nodes_[v].grad_set || !nodes_[v].requires_grad) continue;
    backprop_node(v);
  }
}

void Tape::backprop_node(Var v) {
  Node& n = nodes_[v];
  const Tensor& g = n.grad;
  auto wants = [&](int slot) { return nodes_[n.parents[slot]].requires_grad; };

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kMatMul: {
      const Var a = n.parents[0], b = n.parents[1];
      const Tensor& A = nodes_[a].value;
      const Tensor& B = nodes_[b].value;
      if (wants(0)) {
        Tensor& da = grad_buf(a);
        if (!n.t0 && !n.t1) matmul_accum(g, false, B, true, da);
        else if (n.t0 && !n.t1) matmul_accum(B, false, g, true, da);
        else if (!n.t0 && n.t1) matmul_accum(g, false, B, false, da);
        else matmul_accum(B, true, g, true, da);
      }
      if (wants(1)) {
        Tensor& db = grad_buf(b);
        if (!n.t0 && !n.t1) matmul_accum(A, true, g, false, db);
        else if (n.t0 && !n.t1) matmul_accum(A, false, g, false, db);
        else if (!n.t0 && n.t1) matmul_accum(g, true, A, false, db);
        else matmul_accum(g, true, A, true, db);
      }
      break;
    }
    case Op::kAdd: {
      for (int s = 0; s < 2; ++s) {
        if (!wants(s)) continue;
        Tensor& d = grad_buf(n.parents[s]);
        for (size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i];
      }
      break;
    }
    case Op::kSub: {
      if (wants(0)) {
        Tensor& d = grad_buf(n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i];
      }
      if (wants(1)) {
        Tensor& d = grad_buf(n.parents[1]);
        for (size_t i = 0; i < g.size(); ++i) d.data[i] -= g.data[i];
      }
      break;
    }
    case Op::kMul: {
      const Tensor& A = nodes_[n.parents[0]].value;
      const Tensor& B = nodes_[n.parents[1]].value;
      if (wants(0)) {
        Tensor& d = grad_buf(n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i] * B.data[i];
      }
      if (wants(1)) {
        Tensor& d = grad_buf(n.parents[1]);
        for (size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i] * A.data[i];
      }
      break;
    }
    case Op::kAddRow: {
      if (wants(0)) {
        Tensor& d = grad_buf(n.parents[0]);
        for (size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i];
      }
      if (wants(1)) {
        Tensor& d = grad_buf(n.parents[1]);
        for (int i = 0; i < g.rows; ++i) {
          const double* row = g.row(i);
          for (int j = 0; j < g.cols; ++j) d.data[j] += row[j];
        }
      }
      break;
    }
    case Op::kMulRow: {
      const Tensor& A = nodes_[n.parents[0]].value;
      const Tensor& R = nodes_[n.parents[1]].value;
      if (wants(0)) {
        Tensor& d = grad_buf(n.parents[0]);
        for (int i = 0; i < g.rows; ++i) {
          const double* gr = g.row(i);
          double* dr = d.row(i);
          for (int j = 0; j < g.cols; ++j) dr[j] += gr[j] * R.data[j];
        }
      }
      if (wants(1)) {
        Tensor& d = grad_buf(n.parents[1]);
        for (int i = 0; i < g.rows; ++i) {
          const double* gr = g.row(i);
          const double* ar = A.row(i);
          for (int j = 0; j < g.cols; ++j) d.data[j] += gr[j] * ar[j];
        }
      }
      break;
    }
    case Op::kScale: {
      if (!wants(0)) break;
      Tensor& d = grad_buf(n.parents[0]);
      for (size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i] * n.c0;
      break;
    }
    case Op::kAddConst: {
      if (!wants(0)) break;
      Tensor& d = grad_buf(n.parents[0]);
      for (size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i];
      break;
    }
    case Op::kExp: {
      if (!wants(0)) break;
      Tensor& d = grad_buf(n.parents[0]);
      for (size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i] * n.value.data[i];
      break;
    }
    case Op::kLog: {
      if (!wants(0)) break;
      const Tensor& A = nodes_[n.parents[0]].value;
      Tensor& d = grad_buf(n.parents[0]);
      for (size_t i = 0; i < g.size(); ++i) d.data[i] += g.data[i] / A.data[i];
      break;
    }
    case Op::kSqrt: {
      if (!wants(0)) break;
      Tensor& d = grad_buf(n.parents[0]);
      for (size_t i = 0; i < g.size(); ++i) {
        const double y = n.value.data[i];
        // Subgradient 0 at the origin keeps zero residuals harmless.
        if (y > 0.0) d.data[i] += g.data[i] * 0.5 / y;
      }
      break;
    }
    case Op::kGelu: {
      if (!wants(0)) break;
      const Tensor& A = nodes_[n.parents[0]].value;
      Tensor& d = grad_buf(n.parents[0]);
      ConstArrayMap x(A.data.data(), static_cast<Eigen::Index>(A.size()));
      ConstArrayMap gg(g.data.data(), static_cast<Eigen::Index>(g.size()));
      ArrayMap dd(d.data.data(), static_cast<Eigen::Index>(d.size()));
      dd += gg * (0.5 * (1.0 + (x * kInvSqrt2).erf()) +
                  x * kInvSqrt2Pi * (-0.5 * x * x).exp());
      break;
    }
    case Op::kClamp: {
      if (!wants(0)) break;
      const Tensor& A = nodes_[n.parents[0]].value;
      Tensor& d = grad_buf(n.parents[0]);
      for (size_t i = 0; i < g.size(); ++i) {
        if (A.data[i] > n.c0 && A.data[i] < n.c1) d.data[i] += g.data[i];
      }
      break;
    }
    case Op::kSoftmaxRows: {
      if (!wants(0)) break;
      Tensor& d = grad_buf(n.parents[0]);
      for (int i = 0; i < g.rows; ++i) {
        const double* y = n.value.row(i);
        const double* gr = g.row(i);
        double dot = 0.0;
        for (int j = 0; j < g.cols; ++j) dot += gr[j] * y[j];
        double* dr = d.row(i);
        for (int j = 0; j < g.cols; ++j) dr[j] += y[j] * (gr[j] - dot);
      }
      break;
    }
    case Op::kLayerNormRows: {
      if (!wants(0)) break;
      Tensor& d = grad_buf(n.parents[0]);
      const int m = g.cols;
      for (int i = 0; i < g.rows; ++i) {
        const double* y = n.value.row(i);
        const double* gr = g.row(i);
        const double inv_std = n.aux.data[i];
        double mean_g = 0.0, mean_gy = 0.0;
        for (int j = 0; j < m; ++j) {
          mean_g += gr[j];
          mean_gy += gr[j] * y[j];
        }
        mean_g /= m;
        mean_gy /= m;
        double* dr = d.row(i);
        for (int j = 0; j < m; ++j) {
          dr[j] += inv_std * (gr[j] - mean_g - y[j] * mean_gy);
        }
      }
      break;
    }
    case Op::kSumAll: {
      if (!wants(0)) break;
      Tensor& d = grad_buf(n.parents[0]);
      const double s = g.data[0];
      for (auto& v : d.data) v += s;
      break;
    }
    case Op::kSumCols: {
      if (!wants(0)) break;
      Tensor& d = grad_buf(n.parents[0]);
      for (int i = 0; i < d.rows; ++i) {
        const double s = g.data[i];
        double* dr = d.row(i);
        for (int j = 0; j < d.cols; ++j) dr[j] += s;
      }
      break;
    }
    case Op::kSumRows: {
      if (!wants(0)) break;
      Tensor& d = grad_buf(n.parents[0]);
      for (int i = 0; i < d.rows; ++i) {
        double* dr = d.row(i);
        for (int j = 0; j < d.cols; ++j) dr[j] += g.data[j];
      }
      break;
    }
    case Op::kSliceCols: {
      if (!wants(0)) break;
      Tensor& d = grad_buf(n.parents[0]);
      for (int i = 0; i < g.rows; ++i) {
        const double* gr = g.row(i);
        double* dr = d.row(i) + n.i0;
        for (int j = 0; j < g.cols; ++j) dr[j] += gr[j];
      }
      break;
    }
    case Op::kConcatCols: {
      int off = 0;
      for (size_t s = 0; s < n.parents.size(); ++s) {
        const int w = nodes_[n.parents[s]].value.cols;
        if (nodes_[n.parents[s]].requires_grad) {
          Tensor& d = grad_buf(n.parents[s]);
          for (int i = 0; i < g.rows; ++i) {
            const double* gr = g.row(i) + off;
            double* dr = d.row(i);
            for (int j = 0; j < w; ++j) dr[j] += gr[j];
          }
        }
        off += w;
      }
      break;
    }
  }
}

void Tape::clear() { nodes_.clear(); }

double grad_check(
    const std::function<Tape::Var(Tape&, const std::vector<Tape::Var>&)>& build,
    const std::vector<Tensor>& point, double h) {
  auto eval = [&](const std::vector<Tensor>& at, std::vector<Tensor>* grads) {
    Tape tape;
    std::vector<Tape::Var> leaves;
    leaves.reserve(at.size());
    for (const Tensor& t : at) leaves.push_back(tape.leaf(t, true));
    const Tape::Var out = build(tape, leaves);
    assert(tape.value(out).rows == 1 && tape.value(out).cols == 1);
    const double y = tape.value(out).data[0];
    if (grads) {
      tape.backward(out);
      grads->clear();
      for (size_t i = 0; i < leaves.size(); ++i) {
        grads->push_back(tape.has_grad(leaves[i])
                             ? tape.grad(leaves[i])
                             : Tensor(at[i].rows, at[i].cols));
      }
    }
    return y;
  };

  std::vector<Tensor> analytic;
  eval(point, &analytic);

  double max_rel = 0.0;
  std::vector<Tensor> probe = point;
  for (size_t t = 0; t < point.size(); ++t) {
    for (size_t i = 0; i < point[t].size(); ++i) {
      const double orig = probe[t].data[i];
      probe[t].data[i] = orig + h;
      const double fp = eval(probe, nullptr);
      probe[t].data[i] = orig - h;
      const double fm = eval(probe, nullptr);
      probe[t].data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[t].data[i];
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace reloc
