#pragma once

#include <cassert>
#include <cstdint>
#include <new>
#include <string>
#include <vector>

namespace reloc {

// Allocator returning 64-byte aligned blocks. Vectorized kernels pick code
// paths based on pointer alignment, and heap addresses shift with unrelated
// process state (argv length, environment). Pinning the alignment keeps
// floating point summation order, and therefore every result bit, identical
// across re-runs of the same configuration.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlignment = 64;

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  template <typename U>
  struct rebind {
    using other = AlignedAllocator<U>;
  };

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(kAlignment)));
  }
  void deallocate(T* p, std::size_t) {
    ::operator delete(p, std::align_val_t(kAlignment));
  }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
  template <typename U>
  bool operator!=(const AlignedAllocator<U>&) const {
    return false;
  }
};

using AlignedVector = std::vector<double, AlignedAllocator<double>>;

// Dense row-major matrix of 64-bit floats. Rank-2 is enough everywhere in
// this codebase: vectors are 1xN or Nx1, scalars are 1x1.
struct Tensor {
  int rows = 0;
  int cols = 0;
  AlignedVector data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}
  Tensor(int r, int c, const std::vector<double>& values)
      : rows(r), cols(c), data(values.begin(), values.end()) {
    assert(static_cast<size_t>(rows) * cols == data.size());
  }

  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor full(int r, int c, double v) {
    Tensor t(r, c);
    for (auto& x : t.data) x = v;
    return t;
  }
  static Tensor scalar(double v) { return Tensor(1, 1, {v}); }

  size_t size() const { return data.size(); }
  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
  std::string shape_str() const;
  bool all_finite() const;
};

// C += op(A) * op(B) where op transposes when the flag is set. Shapes after
// op: A is n x k, B is k x m, C is n x m. Transposed operands are handled by
// the kernel without materializing a copy.
void matmul_accum(const Tensor& a, bool ta, const Tensor& b, bool tb, Tensor& c);

Tensor matmul(const Tensor& a, const Tensor& b, bool ta = false, bool tb = false);

Tensor transpose(const Tensor& a);

// In-place rounding of every element through IEEE single precision. Supports
// the reduced-precision run mode; never used by the test oracles.
void round_to_f32(Tensor& t);

bool bit_equal(const Tensor& a, const Tensor& b);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace reloc
