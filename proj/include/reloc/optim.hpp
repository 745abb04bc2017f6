#pragma once

#include <cstdint>
#include <vector>

#include "reloc/tensor.hpp"

namespace reloc {

// AdamW with decoupled weight decay and bias correction.
struct OptimizerState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  uint64_t step = 0;
  std::vector<Tensor> m;  // first moments, parallel to the parameter list
  std::vector<Tensor> v;  // second moments

  void init(const std::vector<Tensor*>& params);
};

// In-place update: w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + wd * w).
// Parameter order must match the order init() saw; it defines the state
// layout in checkpoints.
void adamw_step(const std::vector<Tensor*>& params,
                const std::vector<const Tensor*>& grads, OptimizerState& state,
                double lr);

// Linear warmup 0 -> peak, then cosine decay peak -> 0 at `total`.
double cosine_lr(uint64_t step, uint64_t total, uint64_t warmup, double peak);

}  // namespace reloc
