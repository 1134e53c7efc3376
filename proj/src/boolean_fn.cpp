#include "fiberlab/boolean_fn.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace fiberlab {

namespace {

constexpr int kMaxDimension = 24;  // dense 2^n tables; desk-scale cap

void check_dimension(int n) {
  if (n < 0 || n > kMaxDimension)
    throw std::invalid_argument("dimension n out of range [0, 24]");
}

// In-place unnormalized butterfly: out[S] = sum_z (-1)^{popcount(S & z)} in[z].
// Fixed sequential order keeps results bit-identical across runs.
void butterfly(std::vector<double>& a) {
  const std::size_t size = a.size();
  for (std::size_t half = 1; half < size; half <<= 1) {
    for (std::size_t block = 0; block < size; block += 2 * half) {
      for (std::size_t i = block; i < block + half; ++i) {
        const double lo = a[i];
        const double hi = a[i + half];
        a[i] = lo + hi;
        a[i + half] = lo - hi;
      }
    }
  }
}

}  // namespace

BooleanFn BooleanFn::constant(int n, double c) {
  check_dimension(n);
  BooleanFn f;
  f.n = n;
  f.values.assign(std::size_t{1} << n, c);
  return f;
}

bool PartialFn::is_total() const {
  for (Tri v : values)
    if (v == Tri::kUndefined) return false;
  return true;
}

std::size_t PartialFn::domain_size() const {
  std::size_t count = 0;
  for (Tri v : values)
    if (v != Tri::kUndefined) ++count;
  return count;
}

FourierSpectrum walsh_hadamard(const BooleanFn& f) {
  check_dimension(f.n);
  if (f.values.size() != (std::size_t{1} << f.n))
    throw std::invalid_argument("walsh_hadamard: table length != 2^n");
  FourierSpectrum spec;
  spec.n = f.n;
  spec.coeffs = f.values;
  butterfly(spec.coeffs);
  const double scale = std::ldexp(1.0, -f.n);  // exact dyadic factor
  for (double& c : spec.coeffs) c *= scale;
  return spec;
}

BooleanFn inverse_walsh_hadamard(const FourierSpectrum& spec) {
  check_dimension(spec.n);
  if (spec.coeffs.size() != (std::size_t{1} << spec.n))
    throw std::invalid_argument("inverse_walsh_hadamard: table length != 2^n");
  BooleanFn f;
  f.n = spec.n;
  f.values = spec.coeffs;
  butterfly(f.values);
  return f;
}

double l1_level_weight(const FourierSpectrum& spec, int k) {
  if (k < 0 || k > spec.n)
    throw std::invalid_argument("l1_level_weight: level k out of [0, n]");
  double total = 0.0;
  for (std::uint32_t S = 0; S < spec.coeffs.size(); ++S)
    if (std::popcount(S) == k) total += std::abs(spec.coeffs[S]);
  return total;
}

double biased_expectation(const FourierSpectrum& spec, double rho) {
  if (!(std::abs(rho) < 1.0))
    throw std::invalid_argument("biased_expectation: |rho| must be < 1");
  std::vector<double> rho_pow(static_cast<std::size_t>(spec.n) + 1, 1.0);
  for (int k = 1; k <= spec.n; ++k) rho_pow[k] = rho_pow[k - 1] * rho;
  double total = 0.0;
  for (std::uint32_t S = 0; S < spec.coeffs.size(); ++S)
    total += spec.coeffs[S] * rho_pow[std::popcount(S)];
  return total;
}

BooleanFn majority_fn(int d, int n) {
  check_dimension(n);
  if (d % 2 == 0) throw std::invalid_argument("majority_fn: d must be odd");
  if (d < 1 || d > n) throw std::invalid_argument("majority_fn: need 1 <= d <= n");
  BooleanFn f;
  f.n = n;
  f.values.resize(std::size_t{1} << n);
  const std::uint32_t low_mask = (d == 32) ? ~0u : ((1u << d) - 1u);
  for (std::uint32_t z = 0; z < f.values.size(); ++z) {
    // A set bit encodes -1, so the sum over the first d coordinates is
    // d - 2 * popcount(z & low_mask).
    const int minus_count = std::popcount(z & low_mask);
    f.values[z] = (2 * minus_count < d) ? 1.0 : -1.0;
  }
  return f;
}

double forrelation(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 2 || !std::has_single_bit(n))
    throw std::invalid_argument("forrelation: length must be a power of two >= 2");
  const std::size_t half = n / 2;
  // <H x_1, x_2> with unitary H: apply the unnormalized butterfly to x_1 and
  // rescale by half^{-1/2}.
  std::vector<double> first(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(half));
  butterfly(first);
  double dot = 0.0;
  for (std::size_t i = 0; i < half; ++i) dot += first[i] * x[half + i];
  return (2.0 / static_cast<double>(n)) * dot / std::sqrt(static_cast<double>(half));
}

PartialFn forr_xor_partial(int n) {
  check_dimension(n);
  if (n < 4 || !std::has_single_bit(static_cast<unsigned>(n)))
    throw std::invalid_argument("forr_xor_partial: n must be a power of two >= 4");
  const double log_half = std::log(static_cast<double>(n) / 2.0);
  const double upper = 1.0 / (200.0 * log_half);
  const double lower = 1.0 / (400.0 * log_half);
  PartialFn pf;
  pf.n = n;
  pf.values.resize(std::size_t{1} << n);
  std::vector<double> point(static_cast<std::size_t>(n));
  for (std::uint32_t z = 0; z < pf.values.size(); ++z) {
    for (int i = 0; i < n; ++i)
      point[static_cast<std::size_t>(i)] = (z >> i) & 1u ? -1.0 : 1.0;
    const double value = forrelation(point);
    if (value >= upper)
      pf.values[z] = Tri::kPlus;
    else if (value <= lower)
      pf.values[z] = Tri::kMinus;
    else
      pf.values[z] = Tri::kUndefined;
  }
  return pf;
}

nlohmann::json boolean_fn_to_json(const BooleanFn& f) {
  return nlohmann::json{{"n", f.n}, {"values", f.values}};
}

BooleanFn boolean_fn_from_json(const nlohmann::json& j) {
  BooleanFn f;
  f.n = j.at("n").get<int>();
  check_dimension(f.n);
  f.values = j.at("values").get<std::vector<double>>();
  if (f.values.size() != (std::size_t{1} << f.n))
    throw std::invalid_argument("BooleanFn JSON: values length != 2^n");
  return f;
}

}  // namespace fiberlab
