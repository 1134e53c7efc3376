#include <cmath>
#include <cstdint>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "fiberlab/boolean_fn.hpp"
#include "fiberlab/rng.hpp"
#include "oracle_utils.hpp"

using namespace fiberlab;

namespace {

BooleanFn random_real_fn(int n, std::uint64_t seed) {
  RngStream rng(seed, 0);
  BooleanFn f = BooleanFn::constant(n, 0.0);
  for (auto& v : f.values) v = 2.0 * rng.uniform() - 1.0;
  return f;
}

}  // namespace

TEST_CASE("walsh transform matches the definition sum") {
  for (int n = 1; n <= 6; ++n) {
    const BooleanFn f = random_real_fn(n, 100 + n);
    const FourierSpectrum fast = walsh_hadamard(f);
    const auto slow = oracle::spectrum_by_definition(f);
    for (std::size_t S = 0; S < slow.size(); ++S)
      REQUIRE(fast.coeffs[S] == Catch::Approx(slow[S]).margin(1e-13));
  }
}

TEST_CASE("spectrum of a constant and a dictator") {
  const FourierSpectrum c = walsh_hadamard(BooleanFn::constant(3, -0.25));
  CHECK(c.coeff(0) == -0.25);
  for (std::uint32_t S = 1; S < 8; ++S) CHECK(c.coeff(S) == 0.0);

  // f(z) = z_1 on two variables: values indexed by sign bits.
  BooleanFn dict{2, {1.0, -1.0, 1.0, -1.0}};
  const FourierSpectrum d = walsh_hadamard(dict);
  CHECK(d.coeff(0b01) == 1.0);
  CHECK(d.coeff(0b00) == 0.0);
  CHECK(d.coeff(0b10) == 0.0);
  CHECK(d.coeff(0b11) == 0.0);
}

TEST_CASE("majority on three variables has the textbook spectrum") {
  const BooleanFn maj = majority_fn(3, 3);
  // Point checks of the truth table first.
  CHECK(maj(0b000) == 1.0);   // (+,+,+)
  CHECK(maj(0b100) == 1.0);   // (+,+,-)
  CHECK(maj(0b110) == -1.0);  // (+,-,-)
  CHECK(maj(0b111) == -1.0);  // (-,-,-)
  const FourierSpectrum s = walsh_hadamard(maj);
  CHECK(s.coeff(0b001) == 0.5);
  CHECK(s.coeff(0b010) == 0.5);
  CHECK(s.coeff(0b100) == 0.5);
  CHECK(s.coeff(0b111) == -0.5);
  CHECK(s.coeff(0b000) == 0.0);
  CHECK(s.coeff(0b011) == 0.0);
  CHECK(s.coeff(0b101) == 0.0);
  CHECK(s.coeff(0b110) == 0.0);
}

TEST_CASE("majority embeds into a larger ambient cube untouched") {
  const BooleanFn maj = majority_fn(3, 5);
  REQUIRE(maj.n == 5);
  for (std::uint32_t z = 0; z < 32; ++z)
    CHECK(maj(z) == majority_fn(3, 3)(z & 0b111));
  const FourierSpectrum s = walsh_hadamard(maj);
  CHECK(s.coeff(0b00001) == 0.5);
  CHECK(s.coeff(0b01000) == 0.0);
  CHECK(l1_level_weight(s, 1) == 1.5);
}

TEST_CASE("majority rejects even arity") {
  CHECK_THROWS_AS(majority_fn(4, 4), std::invalid_argument);
  CHECK_THROWS_AS(majority_fn(5, 3), std::invalid_argument);
}

TEST_CASE("parseval holds to machine precision") {
  for (int n : {3, 5, 8}) {
    const BooleanFn f = random_real_fn(n, 7 * n);
    const FourierSpectrum s = walsh_hadamard(f);
    double lhs = 0.0;
    for (double c : s.coeffs) lhs += c * c;
    double rhs = 0.0;
    for (double v : f.values) rhs += v * v;
    rhs /= static_cast<double>(f.values.size());
    CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("inverse transform is an exact involution on sign tables") {
  const BooleanFn f = majority_fn(5, 5);
  const BooleanFn back = inverse_walsh_hadamard(walsh_hadamard(f));
  for (std::size_t z = 0; z < f.values.size(); ++z)
    CHECK(back.values[z] == f.values[z]);  // dyadic, so exact
}

TEST_CASE("level weights of majority") {
  // L_{1,1}(MAJ_3) = 3/2 exactly; level-0 and level-2 mass vanish.
  const FourierSpectrum s = walsh_hadamard(majority_fn(3, 3));
  CHECK(l1_level_weight(s, 0) == 0.0);
  CHECK(l1_level_weight(s, 1) == 1.5);
  CHECK(l1_level_weight(s, 2) == 0.0);
  CHECK(l1_level_weight(s, 3) == 0.5);
  CHECK_THROWS_AS(l1_level_weight(s, 4), std::invalid_argument);
  CHECK_THROWS_AS(l1_level_weight(s, -1), std::invalid_argument);
}

TEST_CASE("majority level-1 weight scales like sqrt(d)") {
  // E[|sum of d signs|] * sqrt(pi / 2d) -> 1, so L_{1,1}/sqrt(d) sits in a
  // narrow band around sqrt(2/pi) ~ 0.7979 for every odd d.
  for (int d : {3, 5, 7, 9, 11}) {
    const FourierSpectrum s = walsh_hadamard(majority_fn(d, d));
    const double ratio = l1_level_weight(s, 1) / std::sqrt(static_cast<double>(d));
    CHECK(ratio > 0.6);
    CHECK(ratio < 1.0);
  }
}

TEST_CASE("biased expectation matches direct enumeration") {
  for (int n : {2, 4, 6}) {
    const BooleanFn f = random_real_fn(n, 900 + n);
    for (double rho : {-0.8, -0.3, 0.0, 0.25, 0.99}) {
      const double fast = biased_expectation(walsh_hadamard(f), rho);
      const double slow = oracle::biased_expectation_by_enumeration(f, rho);
      CHECK(fast == Catch::Approx(slow).margin(1e-12));
    }
  }
  const FourierSpectrum maj = walsh_hadamard(majority_fn(3, 3));
  // 3/2 rho - 1/2 rho^3 at rho = 1/2: 3/4 - 1/16.
  CHECK(biased_expectation(maj, 0.5) == Catch::Approx(0.6875).margin(1e-15));
  CHECK_THROWS_AS(biased_expectation(maj, 1.0), std::invalid_argument);
}

TEST_CASE("forrelation on the smallest instances") {
  // n = 2: one-variable halves, the 1x1 Hadamard transform is the identity,
  // so forr(a, b) = a * b.
  const std::vector<double> point = {0.7, -0.3};
  CHECK(forrelation(point) == Catch::Approx(0.7 * -0.3).margin(1e-15));

  // n = 4, all-ones point: (2/n) <H(1,1), (1,1)> / sqrt(2) = sqrt(2)/2.
  const std::vector<double> ones = {1.0, 1.0, 1.0, 1.0};
  CHECK(forrelation(ones) == Catch::Approx(std::sqrt(2.0) / 2.0).margin(1e-15));
}

TEST_CASE("forrelation xor-promise function is total at n = 4") {
  // With two variables per half, |forr| is sqrt(2)/2 at every sign input, so
  // every point clears one of the two thresholds.
  const PartialFn pf = forr_xor_partial(4);
  CHECK(pf.is_total());
  CHECK(pf.domain_size() == 16);
  int plus = 0, minus = 0;
  for (std::size_t z = 0; z < 16; ++z) {
    REQUIRE(pf.values[z] != Tri::kUndefined);
    (pf.values[z] == Tri::kPlus ? plus : minus)++;
  }
  CHECK(plus == 8);
  CHECK(minus == 8);
}

TEST_CASE("forrelation xor-promise matches thresholds pointwise") {
  const int n = 8;
  const PartialFn pf = forr_xor_partial(n);
  const double upper = 1.0 / (200.0 * std::log(n / 2.0));
  const double lower = 1.0 / (400.0 * std::log(n / 2.0));
  for (std::size_t z = 0; z < pf.values.size(); ++z) {
    std::vector<double> signs(n);
    for (int i = 0; i < n; ++i) signs[i] = ((z >> i) & 1u) ? -1.0 : 1.0;
    const double val = forrelation(signs);
    if (pf.values[z] == Tri::kPlus) {
      CHECK(val >= upper);
    } else if (pf.values[z] == Tri::kMinus) {
      CHECK(val <= lower);
    } else {
      CHECK(val < upper);
      CHECK(val > lower);
    }
  }
}

TEST_CASE("boolean function json round trip") {
  const BooleanFn f = majority_fn(3, 4);
  const BooleanFn back = boolean_fn_from_json(boolean_fn_to_json(f));
  REQUIRE(back.n == f.n);
  for (std::size_t z = 0; z < f.values.size(); ++z)
    CHECK(back.values[z] == f.values[z]);
}
