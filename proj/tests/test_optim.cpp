#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <vector>

#include "reloc/optim.hpp"
#include "reloc/rng.hpp"
#include "reloc/tensor.hpp"

using namespace reloc;

namespace {

Tensor random_tensor(int r, int c, Rng& rng) {
  Tensor t(r, c);
  for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("init zeroes moments parallel to the parameter list") {
  Tensor a(2, 3), b(4, 1);
  OptimizerState st;
  st.step = 99;
  st.init({&a, &b});
  CHECK(st.step == 0);
  REQUIRE(st.m.size() == 2);
  REQUIRE(st.v.size() == 2);
  CHECK(st.m[0].same_shape(a));
  CHECK(st.v[1].same_shape(b));
  for (double v : st.m[0].data) CHECK(v == 0.0);
  for (double v : st.v[1].data) CHECK(v == 0.0);
}

TEST_CASE("adamw_step matches a scalar reference over several steps") {
  Rng rng(31);
  Tensor w = random_tensor(3, 4, rng);
  OptimizerState st;
  st.init({&w});

  // Reference state tracked element by element with the textbook update.
  Tensor ref_w = w, ref_m(3, 4), ref_v(3, 4);
  const double lr = 1e-3;
  for (int step = 1; step <= 5; ++step) {
    const Tensor g = random_tensor(3, 4, rng);
    adamw_step({&w}, {&g}, st, lr);

    const double bc1 = 1.0 - std::pow(st.beta1, step);
    const double bc2 = 1.0 - std::pow(st.beta2, step);
    for (size_t i = 0; i < ref_w.size(); ++i) {
      ref_m.data[i] = st.beta1 * ref_m.data[i] + (1.0 - st.beta1) * g.data[i];
      ref_v.data[i] =
          st.beta2 * ref_v.data[i] + (1.0 - st.beta2) * g.data[i] * g.data[i];
      const double m_hat = ref_m.data[i] / bc1;
      const double v_hat = ref_v.data[i] / bc2;
      ref_w.data[i] -=
          lr * (m_hat / (std::sqrt(v_hat) + st.eps) + st.weight_decay * ref_w.data[i]);
    }
    CHECK(st.step == static_cast<uint64_t>(step));
    CHECK(max_abs_diff(w, ref_w) < 1e-15);
    CHECK(max_abs_diff(st.m[0], ref_m) < 1e-15);
    CHECK(max_abs_diff(st.v[0], ref_v) < 1e-15);
  }
}

TEST_CASE("weight decay is decoupled from the gradient") {
  // With zero gradients the update is pure decay: w <- w * (1 - lr * wd).
  Tensor w = Tensor::full(2, 2, 4.0);
  OptimizerState st;
  st.init({&w});
  const Tensor g(2, 2);
  adamw_step({&w}, {&g}, st, 0.1);
  for (double v : w.data)
    CHECK(v == doctest::Approx(4.0 * (1.0 - 0.1 * st.weight_decay)).epsilon(1e-14));
}

TEST_CASE("bias correction makes the first step a full-size move") {
  // After one step m_hat equals g exactly, so the step direction is
  // -lr * sign(g) up to eps, independent of beta1/beta2.
  Tensor w(1, 2);
  OptimizerState st;
  st.weight_decay = 0.0;
  st.init({&w});
  const Tensor g(1, 2, {0.5, -0.25});
  adamw_step({&w}, {&g}, st, 1e-2);
  CHECK(w.at(0, 0) == doctest::Approx(-1e-2 * 0.5 / (0.5 + st.eps)).epsilon(1e-10));
  CHECK(w.at(0, 1) == doctest::Approx(1e-2 * 0.25 / (0.25 + st.eps)).epsilon(1e-10));
}

TEST_CASE("multiple tensors update independently") {
  Rng rng(32);
  Tensor a = random_tensor(2, 2, rng), b = random_tensor(1, 3, rng);
  Tensor a_solo = a, b_solo = b;
  const Tensor ga = random_tensor(2, 2, rng), gb = random_tensor(1, 3, rng);

  OptimizerState joint;
  joint.init({&a, &b});
  adamw_step({&a, &b}, {&ga, &gb}, joint, 1e-3);

  OptimizerState sa, sb;
  sa.init({&a_solo});
  sb.init({&b_solo});
  adamw_step({&a_solo}, {&ga}, sa, 1e-3);
  adamw_step({&b_solo}, {&gb}, sb, 1e-3);
  CHECK(bit_equal(a, a_solo));
  CHECK(bit_equal(b, b_solo));
}

TEST_CASE("cosine_lr warmup is linear up to the peak") {
  const double peak = 3e-4;
  CHECK(cosine_lr(0, 100, 10, peak) == 0.0);
  CHECK(cosine_lr(5, 100, 10, peak) == doctest::Approx(peak * 0.5).epsilon(1e-14));
  CHECK(cosine_lr(10, 100, 10, peak) == doctest::Approx(peak).epsilon(1e-14));
}

TEST_CASE("cosine_lr decays to zero at the end") {
  const double peak = 1e-3;
  CHECK(cosine_lr(100, 100, 10, peak) == doctest::Approx(0.0).epsilon(1e-18));
  // Halfway through decay the cosine sits at exactly half the peak.
  CHECK(cosine_lr(55, 100, 10, peak) == doctest::Approx(0.5 * peak).epsilon(1e-12));
}

TEST_CASE("cosine_lr matches the closed form after warmup") {
  const uint64_t total = 200, warmup = 20;
  const double peak = 2e-4;
  for (uint64_t s = warmup + 1; s <= total; s += 13) {
    const double progress =
        static_cast<double>(s - warmup) / static_cast<double>(total - warmup);
    const double want = 0.5 * peak * (1.0 + std::cos(std::numbers::pi * progress));
    CHECK(cosine_lr(s, total, warmup, peak) == doctest::Approx(want).epsilon(1e-14));
  }
}

TEST_CASE("cosine_lr is non-increasing after warmup") {
  double prev = cosine_lr(50, 500, 50, 1.0);
  for (uint64_t s = 51; s <= 500; ++s) {
    const double cur = cosine_lr(s, 500, 50, 1.0);
    CHECK(cur <= prev + 1e-15);
    prev = cur;
  }
}

TEST_CASE("cosine_lr with zero warmup starts at the peak") {
  CHECK(cosine_lr(0, 100, 0, 1e-3) == 1e-3);
}
