#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "reloc/rng.hpp"

using namespace reloc;

TEST_CASE("same seed reproduces the exact u64 stream") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("different seeds give different streams") {
  Rng a(1), b(2);
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
  CHECK(same == 0);
}

TEST_CASE("state round trip resumes mid-stream") {
  Rng a(7);
  for (int i = 0; i < 10; ++i) a.next_u64();
  const std::array<uint64_t, 4> saved = a.state();
  std::vector<uint64_t> expect;
  for (int i = 0; i < 50; ++i) expect.push_back(a.next_u64());
  Rng b;
  b.set_state(saved);
  for (int i = 0; i < 50; ++i) CHECK(b.next_u64() == expect[i]);
}

TEST_CASE("uniform stays in the half-open unit interval") {
  Rng rng(3);
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("uniform honors custom bounds") {
  Rng rng(4);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform(-2.5, 7.0);
    CHECK(u >= -2.5);
    CHECK(u < 7.0);
  }
}

TEST_CASE("uniform buckets pass a chi-square sanity bound") {
  Rng rng(5);
  constexpr int kBuckets = 64;
  constexpr int kDraws = 64000;
  std::array<int, kBuckets> counts{};
  for (int i = 0; i < kDraws; ++i)
    counts[static_cast<int>(rng.uniform() * kBuckets)]++;
  const double expect = static_cast<double>(kDraws) / kBuckets;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // 63 degrees of freedom; 103.4 is the 99.9th percentile.
  CHECK(chi2 < 103.4);
}

TEST_CASE("uniform_index covers the full range without bias") {
  Rng rng(6);
  constexpr uint64_t kN = 10;
  std::array<int, kN> counts{};
  for (int i = 0; i < 50000; ++i) {
    const uint64_t v = rng.uniform_index(kN);
    REQUIRE(v < kN);
    counts[v]++;
  }
  const double expect = 5000.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // 9 degrees of freedom; 27.9 is the 99.9th percentile.
  CHECK(chi2 < 27.9);
  CHECK(rng.uniform_index(1) == 0);
}

TEST_CASE("normal matches standard moments") {
  Rng rng(8);
  constexpr int kDraws = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < kDraws; ++i) {
    const double x = rng.normal();
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / kDraws;
  const double var = sum_sq / kDraws - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(std::abs(var - 1.0) < 0.02);
  CHECK(rng.normal(10.0, 0.0) == 10.0);
}

TEST_CASE("sample_without_replacement yields k distinct in-range values") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const uint32_t n = 1 + static_cast<uint32_t>(rng.uniform_index(50));
    const uint32_t k = 1 + static_cast<uint32_t>(rng.uniform_index(n));
    const std::vector<uint32_t> s = rng.sample_without_replacement(n, k);
    REQUIRE(s.size() == k);
    std::set<uint32_t> seen(s.begin(), s.end());
    CHECK(seen.size() == k);
    for (uint32_t v : s) CHECK(v < n);
  }
}

TEST_CASE("full-size sample is a permutation") {
  Rng rng(10);
  const std::vector<uint32_t> s = rng.sample_without_replacement(16, 16);
  std::set<uint32_t> seen(s.begin(), s.end());
  CHECK(seen.size() == 16);
  CHECK(*seen.begin() == 0);
  CHECK(*seen.rbegin() == 15);
}

TEST_CASE("single-element sampling is uniform") {
  Rng rng(11);
  std::array<int, 8> counts{};
  for (int i = 0; i < 40000; ++i) counts[rng.sample_without_replacement(8, 1)[0]]++;
  const double expect = 5000.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // 7 degrees of freedom; 24.3 is the 99.9th percentile.
  CHECK(chi2 < 24.3);
}

TEST_CASE("derive_seed is stateless and collision-free on a small grid") {
  CHECK(derive_seed(0, 0) == derive_seed(0, 0));
  CHECK(derive_seed(123, 456) == derive_seed(123, 456));
  std::set<uint64_t> seen;
  for (uint64_t base = 0; base < 64; ++base)
    for (uint64_t stream = 0; stream < 64; ++stream)
      seen.insert(derive_seed(base, stream));
  CHECK(seen.size() == 64u * 64u);
}

TEST_CASE("derive_seed decorrelates adjacent inputs") {
  // Seeding an Rng from consecutive streams must give unrelated output.
  Rng a(derive_seed(0, 1)), b(derive_seed(0, 2));
  int same = 0;
  for (int i = 0; i < 64; ++i) same += a.next_u64() == b.next_u64();
  CHECK(same == 0);
}
