#pragma once

// Exact Fourier analysis of real-valued functions on the Boolean cube
// {±1}^n, plus the named outer functions used by the experiment drivers
// (majority, Forrelation and its promise version).
//
// Indexing convention, used everywhere in this library:
//   * points z in {±1}^n are bitmasks; bit i of the index corresponds to
//     coordinate i+1, and a set bit encodes z_{i+1} = -1;
//   * subsets S of [n] are bitmasks with bit i <-> coordinate i+1;
//   * the character z_S = prod_{i in S} z_i equals (-1)^popcount(index & S).

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

namespace fiberlab {

struct BooleanFn {
  int n = 0;
  std::vector<double> values;  // size 2^n, entries in [-1, 1]

  static BooleanFn constant(int n, double c);
  double operator()(std::uint32_t index) const { return values[index]; }
  std::size_t size() const { return values.size(); }
};

struct FourierSpectrum {
  int n = 0;
  std::vector<double> coeffs;  // size 2^n, indexed by the subset mask S

  double coeff(std::uint32_t S) const { return coeffs[S]; }
};

// Entries of a partial (promise) function.
enum class Tri : std::int8_t { kMinus = -1, kUndefined = 0, kPlus = 1 };

struct PartialFn {
  int n = 0;
  std::vector<Tri> values;  // size 2^n

  bool is_total() const;
  std::size_t domain_size() const;
};

// Analysis transform: coeffs(S) = 2^{-n} sum_z f(z) z_S, computed by the
// in-place butterfly in O(n 2^n) with a fixed summation order.
FourierSpectrum walsh_hadamard(const BooleanFn& f);

// Synthesis transform: f(z) = sum_S coeffs(S) z_S. Exact inverse of
// walsh_hadamard up to the 2^{-n} scaling (the butterfly is an involution).
BooleanFn inverse_walsh_hadamard(const FourierSpectrum& spec);

// L_{1,k}: sum of |coeff(S)| over |S| = k. Requires 0 <= k <= n.
double l1_level_weight(const FourierSpectrum& spec, int k);

// E_{z ~ mu_rho}[f(z)] = sum_S coeff(S) rho^{|S|}, where mu_rho is the
// product measure with E[z_i] = rho. Requires |rho| < 1.
double biased_expectation(const FourierSpectrum& spec, double rho);

// f(z) = sign(z_1 + ... + z_d) on an ambient n-cube; d must be odd (no ties).
BooleanFn majority_fn(int d, int n);

// Forr(x) = (2/n) <H x_1, x_2> where x = (x_1, x_2), each half of length n/2,
// and H is the (n/2) x (n/2) unitary Hadamard matrix (entries ±(n/2)^{-1/2}).
// Requires n = 2^m with n/2 a power of two (n >= 2).
double forrelation(const std::vector<double>& x);

// The Forrelation promise function on {±1}^n: +1 where Forr >= 1/(200 ln(n/2)),
// -1 where Forr <= 1/(400 ln(n/2)), undefined in between. Requires n a power
// of two with n >= 4.
PartialFn forr_xor_partial(int n);

// JSON form: {"n": int, "values": [2^n floats]} with the index convention
// documented at the top of this header.
nlohmann::json boolean_fn_to_json(const BooleanFn& f);
BooleanFn boolean_fn_from_json(const nlohmann::json& j);

}  // namespace fiberlab
