#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "fiberlab/rng.hpp"
#include "oracle_utils.hpp"

using namespace fiberlab;

TEST_CASE("philox known-answer vectors") {
  // Reference output of Philox4x32-10 from the original Random123 test
  // vectors: zero key, zero counter.
  const std::array<std::uint32_t, 4> zero = {0, 0, 0, 0};
  const std::array<std::uint32_t, 2> key = {0, 0};
  const auto out = philox4x32_10(zero, key);
  CHECK(out[0] == 0x6627e8d5u);
  CHECK(out[1] == 0xe169c58du);
  CHECK(out[2] == 0xbc57ac4cu);
  CHECK(out[3] == 0x9b00dbd8u);

  // All-ones input, second canonical vector.
  const std::array<std::uint32_t, 4> ones_ctr = {0xffffffffu, 0xffffffffu,
                                                 0xffffffffu, 0xffffffffu};
  const std::array<std::uint32_t, 2> ones_key = {0xffffffffu, 0xffffffffu};
  const auto out2 = philox4x32_10(ones_ctr, ones_key);
  CHECK(out2[0] == 0x408f276du);
  CHECK(out2[1] == 0x41c83b0eu);
  CHECK(out2[2] == 0xa20bc7c6u);
  CHECK(out2[3] == 0x6d5451fdu);
}

TEST_CASE("streams are deterministic and independent") {
  RngStream a(1234, 7);
  RngStream b(1234, 7);
  RngStream c(1234, 8);
  bool any_diff = false;
  for (int i = 0; i < 256; ++i) {
    const auto va = a.next_u32();
    CHECK(va == b.next_u32());
    if (va != c.next_u32()) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("stream ids separate purposes") {
  std::set<std::uint64_t> ids;
  for (std::uint64_t p = 0; p < 8; ++p)
    for (std::uint64_t x = 0; x < 8; ++x) ids.insert(stream_id(p, x, 0, 0));
  CHECK(ids.size() == 64);
}

TEST_CASE("uniform doubles live in [0,1) and have the right moments") {
  RngStream rng(99, 0);
  const int samples = 200000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double u = rng.uniform();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sum_sq += u * u;
  }
  const double mean = sum / samples;
  const double var = sum_sq / samples - mean * mean;
  // 5 sigma tolerances: sd(mean) = (1/sqrt(12)) / sqrt(N).
  CHECK(std::abs(mean - 0.5) < 5.0 * 0.288675 / std::sqrt(samples));
  CHECK(std::abs(var - 1.0 / 12.0) < 0.002);
}

TEST_CASE("uniform_open lives in (0,1]") {
  RngStream rng(5, 1);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform_open();
    REQUIRE(u > 0.0);
    REQUIRE(u <= 1.0);
  }
}

TEST_CASE("uniform_int covers its range uniformly") {
  RngStream rng(2024, 3);
  std::vector<int> counts(7, 0);
  const int samples = 70000;
  for (int i = 0; i < samples; ++i) {
    const auto v = rng.uniform_int(7);
    REQUIRE(v < 7u);
    ++counts[static_cast<int>(v)];
  }
  for (int count : counts) {
    // Binomial sd ~ sqrt(N * p(1-p)) ~ 92; allow 5 sigma.
    CHECK(std::abs(count - samples / 7) < 5 * 92);
  }
}

TEST_CASE("normal variates have standard moments") {
  RngStream rng(7, 42);
  const int samples = 400000;
  double sum = 0.0, sum_sq = 0.0, sum_4 = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
    sum_4 += z * z * z * z;
  }
  const double mean = sum / samples;
  const double var = sum_sq / samples;
  const double kurt = sum_4 / samples;
  CHECK(std::abs(mean) < 5.0 / std::sqrt(samples));
  CHECK(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0 / samples));
  CHECK(std::abs(kurt - 3.0) < 5.0 * std::sqrt(96.0 / samples));
}

TEST_CASE("truncated normal stays in the box and matches the closed-form variance") {
  const double T = 1.5;
  RngStream rng(11, 0);
  const int samples = 400000;
  double sum_sq = 0.0;
  for (int i = 0; i < samples; ++i) {
    const double z = rng.truncated_normal(T);
    REQUIRE(std::abs(z) <= T);
    sum_sq += z * z;
  }
  const double var = sum_sq / samples;
  const double expected = oracle::truncated_normal_variance(T);
  // Also sanity-check the closed form against quadrature.
  const double mass = 2.0 * oracle::normal_cdf(T) - 1.0;
  const double quad = oracle::simpson(
                          [](double x) { return x * x * oracle::normal_pdf(x); },
                          -T, T) /
                      mass;
  CHECK(std::abs(expected - quad) < 1e-9);
  CHECK(std::abs(var - expected) < 5.0 * std::sqrt(2.0 / samples));
}

TEST_CASE("rng satisfies UniformRandomBitGenerator and drives std::shuffle") {
  RngStream rng(77, 0);
  std::vector<int> perm(32);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> sorted = perm;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 32; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("parallel shards produce a fixed partition independent of thread timing") {
  std::vector<double> totals_a(kMonteCarloShards, 0.0);
  std::vector<double> totals_b(kMonteCarloShards, 0.0);
  auto run = [](std::vector<double>& totals) {
    parallel_shards(kMonteCarloShards, [&](unsigned shard) {
      RngStream rng(31337, stream_id(1, shard, 0, 0));
      double local = 0.0;
      for (int i = 0; i < 1000; ++i) local += rng.uniform();
      totals[shard] = local;
    });
  };
  run(totals_a);
  run(totals_b);
  for (unsigned s = 0; s < kMonteCarloShards; ++s) CHECK(totals_a[s] == totals_b[s]);
}
