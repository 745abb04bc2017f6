#include "reloc/optim.hpp"

#include <cassert>
#include <cmath>
#include <numbers>

namespace reloc {

void OptimizerState::init(const std::vector<Tensor*>& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const Tensor* p : params) {
    m.emplace_back(p->rows, p->cols);
    v.emplace_back(p->rows, p->cols);
  }
}

void adamw_step(const std::vector<Tensor*>& params,
                const std::vector<const Tensor*>& grads, OptimizerState& state,
                double lr) {
  assert(params.size() == grads.size());
  assert(params.size() == state.m.size());
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p];
    const Tensor& g = *grads[p];
    Tensor& mom = state.m[p];
    Tensor& vel = state.v[p];
    assert(w.same_shape(g) && w.same_shape(mom));
    for (size_t i = 0; i < w.size(); ++i) {
      mom.data[i] = state.beta1 * mom.data[i] + (1.0 - state.beta1) * g.data[i];
      vel.data[i] = state.beta2 * vel.data[i] + (1.0 - state.beta2) * g.data[i] * g.data[i];
      const double m_hat = mom.data[i] / bc1;
      const double v_hat = vel.data[i] / bc2;
      w.data[i] -= lr * (m_hat / (std::sqrt(v_hat) + state.eps) +
                         state.weight_decay * w.data[i]);
    }
  }
}

double cosine_lr(uint64_t step, uint64_t total, uint64_t warmup, double peak) {
  assert(step <= total && warmup < total);
  if (step <= warmup) {
    if (warmup == 0) return peak;
    return peak * static_cast<double>(step) / static_cast<double>(warmup);
  }
  const double progress = static_cast<double>(step - warmup) /
                          static_cast<double>(total - warmup);
  return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace reloc
