#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace reloc {

// Deterministic pseudo-random source with an explicitly serializable state.
// xoshiro256++ core seeded through splitmix64, with distribution transforms
// spelled out here so results do not depend on any standard-library
// implementation details.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed);

  uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double uniform();

  // Uniform in [lo, hi).
  double uniform(double lo, double hi);

  // Unbiased integer in [0, n), n >= 1.
  uint64_t uniform_index(uint64_t n);

  // Standard normal via Box-Muller (cosine branch only, no cached spare).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // First k entries of a Fisher-Yates shuffle of 0..n-1 (sampling without
  // replacement). k <= n.
  std::vector<uint32_t> sample_without_replacement(uint32_t n, uint32_t k);

  std::array<uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<uint64_t, 4> s_{};
};

// Stateless seed mixing for independent streams: hashing (base, stream)
// through splitmix64 twice. Used for per-tuple / per-frame / per-query seeds
// so determinism never depends on call order or thread scheduling.
uint64_t derive_seed(uint64_t base, uint64_t stream);

}  // namespace reloc
