#include "fiberlab/concentration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <boost/math/distributions/normal.hpp>
#include <fmt/format.h>

#include "fiberlab/report.hpp"
#include "fiberlab/rng.hpp"

namespace fiberlab {
namespace {

constexpr std::uint64_t kPurposeChi2 = 0x63686932;
constexpr std::uint64_t kPurposeQuadTail = 0x71746c73;
constexpr std::uint64_t kPurposeLevelK = 0x6c766c6b;
constexpr std::uint64_t kPurposeTightness = 0x74676874;
constexpr std::uint64_t kPurposeIso = 0x69736f70;

const double kSqrt2 = std::sqrt(2.0);
const double kInvSqrt2Pi = 1.0 / std::sqrt(8.0 * std::atan(1.0));

double normal_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }
double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }
double normal_upper_tail(double x) { return 0.5 * std::erfc(x / kSqrt2); }

std::vector<std::uint64_t> shard_counts(std::uint64_t n) {
  std::vector<std::uint64_t> counts(
      kMonteCarloShards, n / static_cast<std::uint64_t>(kMonteCarloShards));
  const std::uint64_t extra = n % static_cast<std::uint64_t>(kMonteCarloShards);
  for (std::uint64_t i = 0; i < extra; ++i) ++counts[i];
  return counts;
}

// Shared tail-check driver: draws the statistic per shard, counts exceedances
// of an ascending threshold grid, and applies the verdict rule.
TailReport run_tail_check(
    std::string statistic_name, std::vector<double> r_grid,
    std::uint64_t n_samples, std::uint64_t seed, std::uint64_t purpose,
    std::uint64_t tag,
    const std::function<double(RngStream&)>& draw_statistic,
    const std::function<double(double)>& bound_at) {
  if (r_grid.empty()) throw std::invalid_argument("empty threshold grid");
  std::sort(r_grid.begin(), r_grid.end());
  r_grid.erase(std::unique(r_grid.begin(), r_grid.end()), r_grid.end());

  const std::vector<std::uint64_t> counts = shard_counts(n_samples);
  std::vector<std::vector<std::uint64_t>> shard_hits(
      kMonteCarloShards, std::vector<std::uint64_t>(r_grid.size(), 0));
  parallel_shards(kMonteCarloShards, [&](int shard) {
    RngStream rng(seed, stream_id(purpose, tag,
                                  static_cast<std::uint64_t>(shard)));
    auto& hits = shard_hits[static_cast<std::size_t>(shard)];
    for (std::uint64_t s = 0; s < counts[static_cast<std::size_t>(shard)];
         ++s) {
      const double value = draw_statistic(rng);
      for (std::size_t j = 0; j < r_grid.size(); ++j) {
        if (value >= r_grid[j])
          ++hits[j];
        else
          break;  // ascending grid: failing one threshold fails the rest
      }
    }
  });

  TailReport report;
  report.statistic = std::move(statistic_name);
  report.samples = n_samples;
  report.z = 3.0;
  report.seed = seed;
  for (std::size_t j = 0; j < r_grid.size(); ++j) {
    TailPoint point;
    point.r = r_grid[j];
    for (const auto& hits : shard_hits) point.hits += hits[j];
    point.empirical =
        static_cast<double>(point.hits) / static_cast<double>(n_samples);
    const WilsonInterval ci = wilson_interval(point.hits, n_samples, report.z);
    point.ci_low = ci.low;
    point.ci_high = ci.high;
    point.bound = bound_at(point.r);
    if (point.bound < 1.0 / static_cast<double>(n_samples))
      point.pass = (point.hits == 0);
    else
      point.pass = (point.ci_high <= point.bound);
    report.points.push_back(point);
  }
  return report;
}

double level_k_bound(double mu, int k) {
  const double log_term = 1.0 - std::log(mu);  // ln(e / mu)
  return 2.0 * std::exp(2.0) * mu * mu * std::pow(log_term, k);
}

// |d bound / d mu|, for propagating the measure-estimate error.
double level_k_bound_slope(double mu, int k) {
  const double log_term = 1.0 - std::log(mu);
  return 2.0 * std::exp(2.0) * mu *
         std::abs(2.0 * std::pow(log_term, k) -
                  k * std::pow(log_term, k - 1));
}

double fit_log_log_slope(const std::vector<double>& xs,
                         const std::vector<double>& ys) {
  const std::size_t count = xs.size();
  double mean_x = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    mean_x += std::log(xs[i]);
    mean_y += std::log(ys[i]);
  }
  mean_x /= static_cast<double>(count);
  mean_y /= static_cast<double>(count);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double dx = std::log(xs[i]) - mean_x;
    sxy += dx * (std::log(ys[i]) - mean_y);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace

bool TailReport::all_pass() const {
  for (const TailPoint& point : points)
    if (!point.pass) return false;
  return true;
}

std::string TailReport::to_csv() const {
  std::string out = "r,empirical,ci_low,ci_high,bound,verdict\n";
  for (const TailPoint& point : points) {
    out += join_csv({format_double(point.r), format_double(point.empirical),
                     format_double(point.ci_low), format_double(point.ci_high),
                     format_double(point.bound),
                     point.pass ? "PASS" : "FAIL"});
    out += '\n';
  }
  return out;
}

QuadraticFormSet::QuadraticFormSet(int n, std::vector<Eigen::MatrixXd> ms)
    : n_(n), ms_(std::move(ms)) {
  if (n_ < 1) throw std::invalid_argument("quadratic forms need dimension >= 1");
  for (std::size_t i = 0; i < ms_.size(); ++i) {
    const Eigen::MatrixXd& m = ms_[i];
    if (m.rows() != n_ || m.cols() != n_)
      throw std::invalid_argument(
          fmt::format("matrix {} is not {}x{}", i, n_, n_));
    if (m.diagonal().cwiseAbs().maxCoeff() > 1e-10)
      throw std::invalid_argument(
          fmt::format("matrix {} has a nonzero diagonal", i));
    for (std::size_t j = 0; j <= i; ++j) {
      const double dot = (ms_[j].array() * m.array()).sum();
      const double target = (i == j) ? 1.0 : 0.0;
      if (std::abs(dot - target) > 1e-10)
        throw std::invalid_argument(
            fmt::format("matrices {} and {} are not orthonormal", j, i));
    }
  }
}

QuadraticFormSet QuadraticFormSet::gram_schmidt(
    int n, const std::vector<Eigen::MatrixXd>& seeds) {
  std::vector<Eigen::MatrixXd> basis;
  basis.reserve(seeds.size());
  for (Eigen::MatrixXd m : seeds) {
    if (m.rows() != n || m.cols() != n)
      throw std::invalid_argument("seed matrix has the wrong shape");
    m.diagonal().setZero();
    for (int pass = 0; pass < 2; ++pass)  // re-orthogonalize for stability
      for (const Eigen::MatrixXd& b : basis)
        m -= (b.array() * m.array()).sum() * b;
    const double norm = m.norm();
    if (norm < 1e-8)
      throw std::invalid_argument(
          "seed matrices are linearly dependent after diagonal removal");
    basis.push_back(m / norm);
  }
  return QuadraticFormSet(n, std::move(basis));
}

double QuadraticFormSet::statistic(const Eigen::VectorXd& x) const {
  double total = 0.0;
  for (const Eigen::MatrixXd& m : ms_) {
    const double q = x.dot(m * x);
    total += q * q;
  }
  return total;
}

TailReport chi2_tail_check(int m, std::vector<double> r_grid,
                           std::uint64_t n_samples, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("chi2 check needs m >= 1");
  if (n_samples < 100000)
    throw std::invalid_argument("chi2 check needs at least 1e5 samples");
  for (double r : r_grid)
    if (r < 2.0 * m)
      throw std::invalid_argument(
          fmt::format("threshold {} below the valid range r >= 2m = {}", r,
                      2.0 * m));
  return run_tail_check(
      fmt::format("chi2(m={})", m), std::move(r_grid), n_samples, seed,
      kPurposeChi2, static_cast<std::uint64_t>(m),
      [m](RngStream& rng) {
        double total = 0.0;
        for (int i = 0; i < m; ++i) {
          const double x = rng.normal();
          total += x * x;
        }
        return total;
      },
      [](double r) { return std::exp(-r / 4.0); });
}

TailReport hanson_wright_check(const QuadraticFormSet& forms,
                               std::vector<double> r_grid,
                               std::uint64_t n_samples, double kappa,
                               std::uint64_t seed) {
  if (kappa <= 0.0) throw std::invalid_argument("kappa must be positive");
  const int m = forms.count();
  const int n = forms.dim();
  for (double r : r_grid)
    if (r < 98.0 * m)
      throw std::invalid_argument(
          fmt::format("threshold {} below the valid range r >= 98m = {}", r,
                      98.0 * m));
  return run_tail_check(
      fmt::format("quadratic-forms(m={},n={})", m, n), std::move(r_grid),
      n_samples, seed, kPurposeQuadTail,
      stream_id(static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(n)),
      [&forms, n](RngStream& rng) {
        Eigen::VectorXd x(n);
        for (int i = 0; i < n; ++i) x(i) = rng.normal();
        return forms.statistic(x);
      },
      [m, kappa](double r) {
        if (r == 0.0) return 1.0;
        return std::exp(-r / (kappa * (m + std::sqrt(r))));
      });
}

double GaussianSet::exact_measure() const {
  if (!has_exact)
    throw std::logic_error("set has no closed-form description");
  double measure = 1.0;
  for (const auto& [lo, hi] : intervals)
    measure *= normal_cdf(hi) - normal_cdf(lo);
  return measure;
}

double GaussianSet::exact_level_k_sum(int k) const {
  if (!has_exact)
    throw std::logic_error("set has no closed-form description");
  if (k != 1 && k != 2)
    throw std::invalid_argument("level-k sums implemented for k in {1,2}");
  const int dim = static_cast<int>(intervals.size());
  std::vector<double> prob(static_cast<std::size_t>(dim));
  std::vector<double> first_moment(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) {
    const auto& [lo, hi] = intervals[static_cast<std::size_t>(i)];
    prob[static_cast<std::size_t>(i)] = normal_cdf(hi) - normal_cdf(lo);
    first_moment[static_cast<std::size_t>(i)] =
        normal_pdf(lo) - normal_pdf(hi);
  }
  auto rest_product = [&](int skip_a, int skip_b) {
    double product = 1.0;
    for (int j = 0; j < dim; ++j)
      if (j != skip_a && j != skip_b)
        product *= prob[static_cast<std::size_t>(j)];
    return product;
  };
  double total = 0.0;
  if (k == 1) {
    for (int i = 0; i < dim; ++i) {
      const double term =
          first_moment[static_cast<std::size_t>(i)] * rest_product(i, i);
      total += term * term;
    }
  } else {
    for (int i = 0; i < dim; ++i)
      for (int j = i + 1; j < dim; ++j) {
        const double term = first_moment[static_cast<std::size_t>(i)] *
                            first_moment[static_cast<std::size_t>(j)] *
                            rest_product(i, j);
        total += term * term;
      }
  }
  return total;
}

GaussianSet product_set(std::vector<std::pair<double, double>> intervals,
                        std::string name) {
  if (intervals.empty()) throw std::invalid_argument("empty interval list");
  for (const auto& [lo, hi] : intervals)
    if (!(lo < hi))
      throw std::invalid_argument("each interval needs lo < hi");
  GaussianSet set;
  set.name = std::move(name);
  set.n = static_cast<int>(intervals.size());
  set.has_exact = true;
  set.intervals = intervals;
  set.member = [intervals = std::move(intervals)](const Eigen::VectorXd& x) {
    for (int i = 0; i < x.size(); ++i) {
      const auto& [lo, hi] = intervals[static_cast<std::size_t>(i)];
      if (x(i) < lo || x(i) > hi) return false;
    }
    return true;
  };
  return set;
}

GaussianSet halfspace_set(int n, double t) {
  if (n < 1) throw std::invalid_argument("halfspace needs dimension >= 1");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, double>> intervals(
      static_cast<std::size_t>(n), {-inf, inf});
  intervals[0] = {t, inf};
  return product_set(std::move(intervals),
                     fmt::format("halfspace(x1>={})", format_double(t)));
}

std::string LevelKReport::to_csv() const {
  std::string out = "set,k,mu,lhs,bound,ratio,mc_error,exact_ratio,verdict\n";
  for (const LevelKRow& row : rows) {
    out += join_csv({row.name, std::to_string(k), format_double(row.mu),
                     format_double(row.lhs), format_double(row.bound),
                     format_double(row.ratio), format_double(row.mc_error),
                     row.has_exact ? format_double(row.ratio_exact) : "",
                     row.pass ? "PASS" : "FAIL"});
    out += '\n';
  }
  return out;
}

LevelKReport level_k_inequality_check(const std::vector<GaussianSet>& family,
                                      int k, std::uint64_t n_samples,
                                      std::uint64_t seed) {
  if (k != 1 && k != 2)
    throw std::invalid_argument("level-k check implemented for k in {1,2}");
  if (family.empty()) throw std::invalid_argument("empty set family");
  if (n_samples < 1000)
    throw std::invalid_argument("level-k check needs at least 1e3 samples");
  const int n = family.front().n;
  if (n < 1 || n > 24)
    throw std::invalid_argument("set dimension out of range [1, 24]");
  for (const GaussianSet& set : family)
    if (set.n != n)
      throw std::invalid_argument("family members must share the dimension");

  // Term index layout: k=1 -> coordinates; k=2 -> pairs (i<j) in row order.
  std::vector<std::pair<int, int>> terms;
  if (k == 1) {
    for (int i = 0; i < n; ++i) terms.push_back({i, i});
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) terms.push_back({i, j});
  }
  const std::size_t term_count = terms.size();
  const std::size_t set_count = family.size();

  struct ShardAcc {
    std::vector<std::uint64_t> members;
    std::vector<double> s1;  // sum of 1_A x_S, set-major
    std::vector<double> s2;  // sum of 1_A x_S^2
  };
  std::vector<ShardAcc> accs(kMonteCarloShards);
  for (ShardAcc& acc : accs) {
    acc.members.assign(set_count, 0);
    acc.s1.assign(set_count * term_count, 0.0);
    acc.s2.assign(set_count * term_count, 0.0);
  }
  const std::vector<std::uint64_t> counts = shard_counts(n_samples);
  parallel_shards(kMonteCarloShards, [&](int shard) {
    RngStream rng(seed, stream_id(kPurposeLevelK, static_cast<std::uint64_t>(k),
                                  static_cast<std::uint64_t>(shard)));
    ShardAcc& acc = accs[static_cast<std::size_t>(shard)];
    Eigen::VectorXd x(n);
    for (std::uint64_t s = 0; s < counts[static_cast<std::size_t>(shard)];
         ++s) {
      for (int i = 0; i < n; ++i) x(i) = rng.normal();
      for (std::size_t set_idx = 0; set_idx < set_count; ++set_idx) {
        if (!family[set_idx].member(x)) continue;
        ++acc.members[set_idx];
        double* s1 = acc.s1.data() + set_idx * term_count;
        double* s2 = acc.s2.data() + set_idx * term_count;
        for (std::size_t t = 0; t < term_count; ++t) {
          const double x_term = (k == 1)
                                    ? x(terms[t].first)
                                    : x(terms[t].first) * x(terms[t].second);
          s1[t] += x_term;
          s2[t] += x_term * x_term;
        }
      }
    }
  });

  LevelKReport report;
  report.k = k;
  report.samples = n_samples;
  report.seed = seed;
  const double total = static_cast<double>(n_samples);
  for (std::size_t set_idx = 0; set_idx < set_count; ++set_idx) {
    std::uint64_t members = 0;
    for (const ShardAcc& acc : accs) members += acc.members[set_idx];
    const double mu = static_cast<double>(members) / total;
    if (mu < 10.0 / total)
      throw std::domain_error(
          fmt::format("set '{}' has measure below 10/N, too small to test",
                      family[set_idx].name));

    double lhs = 0.0;
    double lhs_variance = 0.0;
    for (std::size_t t = 0; t < term_count; ++t) {
      double s1 = 0.0, s2 = 0.0;
      for (const ShardAcc& acc : accs) {
        s1 += acc.s1[set_idx * term_count + t];
        s2 += acc.s2[set_idx * term_count + t];
      }
      const double mean = s1 / total;
      const double var = std::max(s2 / total - mean * mean, 0.0);
      lhs += mean * mean - var / total;  // bias-corrected square
      lhs_variance += 4.0 * mean * mean * var / total +
                      2.0 * var * var / (total * total);
    }
    lhs = std::max(lhs, 0.0);
    const double lhs_error = std::sqrt(lhs_variance);

    LevelKRow row;
    row.name = family[set_idx].name;
    row.mu = mu;
    row.lhs = lhs;
    row.bound = level_k_bound(mu, k);
    row.ratio = lhs / row.bound;
    const double mu_error = std::sqrt(mu * (1.0 - mu) / total);
    const double bound_error = level_k_bound_slope(mu, k) * mu_error;
    row.mc_error = std::sqrt(
        std::pow(lhs_error / row.bound, 2) +
        std::pow(row.ratio * bound_error / row.bound, 2));
    row.pass = row.ratio <= 1.0 + 3.0 * row.mc_error;
    if (family[set_idx].has_exact) {
      row.has_exact = true;
      row.mu_exact = family[set_idx].exact_measure();
      row.lhs_exact = family[set_idx].exact_level_k_sum(k);
      const double exact_bound = level_k_bound(row.mu_exact, k);
      row.ratio_exact = row.lhs_exact == 0.0 ? 0.0 : row.lhs_exact / exact_bound;
      row.pass = row.pass && row.ratio_exact <= 1.0 + 1e-12;
    }
    report.rows.push_back(row);
    report.worst_ratio = std::max(report.worst_ratio, row.ratio);
  }
  report.pass = true;
  for (const LevelKRow& row : report.rows) report.pass = report.pass && row.pass;
  return report;
}

double hw_tightness_exact(int d, double c) {
  const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
  const double a = c * std::pow(static_cast<double>(d), 0.25);
  const double tail = normal_upper_tail(a);
  const double second_moment = 1.0 + a * normal_pdf(a) / tail;
  return 0.5 * s * (s - 1) * second_moment * second_moment;
}

namespace {

int validated_sqrt(int d) {
  const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
  if (s < 2 || s > 8 || s * s != d)
    throw std::invalid_argument(
        fmt::format("d = {} must be a perfect square with 2 <= sqrt(d) <= 8",
                    d));
  return s;
}

}  // namespace

TightnessPoint hw_tightness_point(int d, std::uint64_t n_samples, double c,
                                  std::uint64_t seed) {
  const int s = validated_sqrt(d);
  if (c < 0.0) throw std::invalid_argument("c must be nonnegative");
  if (n_samples < 1000)
    throw std::invalid_argument("tightness point needs at least 1e3 samples");
  const double a = c * std::pow(static_cast<double>(d), 0.25);
  const double tail = normal_upper_tail(a);
  const boost::math::normal_distribution<double> unit_normal;

  const std::vector<std::uint64_t> counts = shard_counts(n_samples);
  std::vector<double> sums(kMonteCarloShards, 0.0);
  std::vector<double> sq_sums(kMonteCarloShards, 0.0);
  parallel_shards(kMonteCarloShards, [&](int shard) {
    RngStream rng(seed,
                  stream_id(kPurposeTightness, static_cast<std::uint64_t>(d),
                            static_cast<std::uint64_t>(shard)));
    double sum = 0.0, sq_sum = 0.0;
    for (std::uint64_t i = 0; i < counts[static_cast<std::size_t>(shard)];
         ++i) {
      // Coordinates are independent, so the conditioning |x_j| >= a samples
      // exactly per coordinate: a uniform point of the conditional tail mass,
      // mapped through the Gaussian quantile, with a random sign.
      double sum2 = 0.0, sum4 = 0.0;
      for (int j = 0; j < s; ++j) {
        const double u = rng.uniform_open();
        const double magnitude = boost::math::quantile(
            boost::math::complement(unit_normal, u * tail));
        const double x2 = magnitude * magnitude;
        sum2 += x2;
        sum4 += x2 * x2;
      }
      const double q = 0.5 * (sum2 * sum2 - sum4);
      sum += q;
      sq_sum += q * q;
    }
    sums[static_cast<std::size_t>(shard)] = sum;
    sq_sums[static_cast<std::size_t>(shard)] = sq_sum;
  });

  double sum = 0.0, sq_sum = 0.0;
  for (int shard = 0; shard < kMonteCarloShards; ++shard) {
    sum += sums[static_cast<std::size_t>(shard)];
    sq_sum += sq_sums[static_cast<std::size_t>(shard)];
  }
  TightnessPoint point;
  point.d = d;
  const double total = static_cast<double>(n_samples);
  point.estimate = sum / total;
  const double variance =
      std::max(sq_sum / total - point.estimate * point.estimate, 0.0);
  point.std_error = std::sqrt(variance / total);
  point.exact = hw_tightness_exact(d, c);
  return point;
}

TightnessReport hw_tightness_demo(const std::vector<int>& d_values,
                                  std::uint64_t n_samples, double c,
                                  std::uint64_t seed) {
  if (d_values.size() < 2)
    throw std::invalid_argument("the scaling fit needs at least two d values");
  TightnessReport report;
  report.c = c;
  report.samples_per_point = n_samples;
  report.seed = seed;
  std::vector<double> ds, estimates, exacts;
  for (int d : d_values) {
    report.points.push_back(hw_tightness_point(d, n_samples, c, seed));
    ds.push_back(static_cast<double>(d));
    estimates.push_back(report.points.back().estimate);
    exacts.push_back(report.points.back().exact);
  }
  report.fitted_exponent = fit_log_log_slope(ds, estimates);
  report.fitted_exponent_exact = fit_log_log_slope(ds, exacts);
  return report;
}

std::string TightnessReport::to_csv() const {
  std::string out = "d,estimate,std_error,exact\n";
  for (const TightnessPoint& point : points) {
    out += join_csv({std::to_string(point.d), format_double(point.estimate),
                     format_double(point.std_error),
                     format_double(point.exact)});
    out += '\n';
  }
  return out;
}

std::string IsoperimetricDiagnostic::to_csv() const {
  std::string out = "quantity,mean,bound,verdict\n";
  auto row = [&](const char* name, double mean, double bound) {
    out += join_csv({name, format_double(mean), format_double(bound),
                     mean <= bound + 1e-9 ? "PASS" : "FAIL"});
    out += '\n';
  };
  row("f", mean_f, bound_f);
  row("g", mean_g, bound_gh);
  row("h", mean_h, bound_gh);
  row("v", v, 1.0);
  return out;
}

IsoperimetricDiagnostic isoperimetric_diagnostic(const QuadraticFormSet& forms,
                                                 std::uint64_t n_samples,
                                                 std::uint64_t seed) {
  if (n_samples < 100)
    throw std::invalid_argument("diagnostic needs at least 100 samples");
  const int n = forms.dim();
  const int m = forms.count();

  IsoperimetricDiagnostic diag;
  diag.n = n;
  diag.m = m;
  diag.samples = n_samples;
  diag.seed = seed;
  diag.bound_f = std::sqrt(2.0 * m);
  diag.bound_gh = std::sqrt(static_cast<double>(m));

  if (m > 0) {
    // sigma_max of the m x n^2 flattening, via the (tiny) Gram matrix.
    Eigen::MatrixXd gram(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        gram(i, j) =
            (forms.matrices()[static_cast<std::size_t>(i)].array() *
             forms.matrices()[static_cast<std::size_t>(j)].array())
                .sum();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    diag.v = std::sqrt(solver.eigenvalues().maxCoeff());
  }

  const std::vector<std::uint64_t> counts = shard_counts(n_samples);
  std::vector<double> f_sums(kMonteCarloShards, 0.0);
  std::vector<double> g_sums(kMonteCarloShards, 0.0);
  std::vector<double> h_sums(kMonteCarloShards, 0.0);
  parallel_shards(kMonteCarloShards, [&](int shard) {
    RngStream rng(seed, stream_id(kPurposeIso, static_cast<std::uint64_t>(m),
                                  static_cast<std::uint64_t>(shard)));
    Eigen::VectorXd y(n);
    Eigen::MatrixXd rows_g(m, n), rows_h(m, n);
    for (std::uint64_t i = 0; i < counts[static_cast<std::size_t>(shard)];
         ++i) {
      for (int j = 0; j < n; ++j) y(j) = rng.normal();
      if (m == 0) continue;
      double f_sq = 0.0;
      for (int idx = 0; idx < m; ++idx) {
        const Eigen::MatrixXd& mat =
            forms.matrices()[static_cast<std::size_t>(idx)];
        const Eigen::VectorXd my = mat * y;
        const double q = y.dot(my);
        f_sq += q * q;
        rows_g.row(idx) = my.transpose();
        rows_h.row(idx) = (mat.transpose() * y).transpose();
      }
      f_sums[static_cast<std::size_t>(shard)] += std::sqrt(f_sq);
      g_sums[static_cast<std::size_t>(shard)] +=
          rows_g.jacobiSvd().singularValues()(0);
      h_sums[static_cast<std::size_t>(shard)] +=
          rows_h.jacobiSvd().singularValues()(0);
    }
  });
  double f_total = 0.0, g_total = 0.0, h_total = 0.0;
  for (int shard = 0; shard < kMonteCarloShards; ++shard) {
    f_total += f_sums[static_cast<std::size_t>(shard)];
    g_total += g_sums[static_cast<std::size_t>(shard)];
    h_total += h_sums[static_cast<std::size_t>(shard)];
  }
  const double total = static_cast<double>(n_samples);
  diag.mean_f = f_total / total;
  diag.mean_g = g_total / total;
  diag.mean_h = h_total / total;
  diag.pass = diag.mean_f <= diag.bound_f + 1e-9 &&
              diag.mean_g <= diag.bound_gh + 1e-9 &&
              diag.mean_h <= diag.bound_gh + 1e-9 && diag.v <= 1.0 + 1e-9;
  return diag;
}

}  // namespace fiberlab
