#pragma once

// Monte Carlo verification toolbox for the Gaussian concentration bounds that
// back the clean-protocol analysis: chi-squared tails, tails of sums of
// squares of orthonormal zero-diagonal quadratic forms, the level-k inequality
// on structured set families, a tightness demo for the quadratic-form moment
// scaling, and a diagnostic for the isoperimetric quantities behind the
// quadratic-form tail proof.
//
// Every routine is seeded and shards its sampling over a fixed number of
// counter-based streams, so reports are byte-identical across reruns and
// machine-independent.

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace fiberlab {

// One threshold row of a tail verification: the empirical exceedance
// probability with a Wilson confidence interval, against the analytic bound.
//
// Verdict rule: PASS iff the Wilson upper confidence limit is at most the
// bound. When the bound is below the Monte Carlo resolution 1/samples, the
// interval cannot certify it, so the rule switches to requiring zero
// exceedances.
struct TailPoint {
  double r = 0.0;
  std::uint64_t hits = 0;
  double empirical = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double bound = 0.0;
  bool pass = false;
};

struct TailReport {
  std::string statistic;
  std::uint64_t samples = 0;
  double z = 3.0;  // Wilson interval half-width in standard errors
  std::uint64_t seed = 0;
  std::vector<TailPoint> points;  // sorted by increasing threshold

  bool all_pass() const;
  // Columns: r, empirical, ci_low, ci_high, bound, verdict.
  std::string to_csv() const;
};

// A family M_1..M_m of n x n matrices, each with zero diagonal, pairwise
// orthonormal under the Frobenius inner product (both to 1e-10). These index
// the quadratic forms x -> <x (.) x, M_i> = x^T M_i x of the off-diagonal
// tensor of a Gaussian vector.
class QuadraticFormSet {
 public:
  QuadraticFormSet(int n, std::vector<Eigen::MatrixXd> ms);

  // Zeroes the diagonals of the seed matrices and orthonormalizes them by
  // Gram-Schmidt in the Frobenius geometry. Throws if the seeds are linearly
  // dependent after diagonal removal.
  static QuadraticFormSet gram_schmidt(int n,
                                       const std::vector<Eigen::MatrixXd>& seeds);

  int dim() const { return n_; }
  int count() const { return static_cast<int>(ms_.size()); }
  const std::vector<Eigen::MatrixXd>& matrices() const { return ms_; }

  // sum_i (x^T M_i x)^2.
  double statistic(const Eigen::VectorXd& x) const;

 private:
  int n_;
  std::vector<Eigen::MatrixXd> ms_;
};

// Constant for the quadratic-form tail bound exp(-r / (kappa (m + sqrt r))).
inline constexpr double kQuadraticTailKappa = 56448.0;

// Empirical tail of sum_{i<=m} x_i^2 against the bound e^{-r/4}.
// Requires m >= 1, every r >= 2m, and n_samples >= 1e5.
TailReport chi2_tail_check(int m, std::vector<double> r_grid,
                           std::uint64_t n_samples, std::uint64_t seed = 0);

// Empirical tail of sum_i (x^T M_i x)^2 against exp(-r / (kappa (m + sqrt r))).
// Requires every r >= 98 m. An empty form set (m = 0) has statistic 0.
TailReport hanson_wright_check(const QuadraticFormSet& forms,
                               std::vector<double> r_grid,
                               std::uint64_t n_samples,
                               double kappa = kQuadraticTailKappa,
                               std::uint64_t seed = 0);

// A measurable subset of R^n under the standard Gaussian. `member` decides
// membership; when the set is a product of per-coordinate intervals, the
// intervals are recorded too and the Gaussian measure and level-k sums have
// closed forms.
struct GaussianSet {
  std::string name;
  int n = 0;
  std::function<bool(const Eigen::VectorXd&)> member;
  bool has_exact = false;
  std::vector<std::pair<double, double>> intervals;  // set iff has_exact

  // Exact Gaussian measure (product sets only).
  double exact_measure() const;
  // Exact sum_{|S|=k} E[1_A x_S]^2 for k in {1, 2} (product sets only).
  double exact_level_k_sum(int k) const;
};

// {x : lo_i <= x_i <= hi_i for all i}; use +/-infinity for unbounded sides.
GaussianSet product_set(std::vector<std::pair<double, double>> intervals,
                        std::string name);
// {x : x_1 >= t} in dimension n.
GaussianSet halfspace_set(int n, double t);

// Per-set outcome of the level-k inequality check. The Monte Carlo path
// estimates mu and the level-k sum from samples; for product sets the exact
// closed forms are evaluated alongside. A set passes when the Monte Carlo
// ratio is at most 1 + 3 * (propagated standard error) and, when available,
// the exact ratio is at most 1.
struct LevelKRow {
  std::string name;
  double mu = 0.0;        // empirical measure
  double lhs = 0.0;       // empirical level-k sum (bias-corrected)
  double bound = 0.0;     // 2 e^2 mu^2 ln^k(e/mu) at the empirical mu
  double ratio = 0.0;
  double mc_error = 0.0;  // propagated standard error of the ratio
  bool has_exact = false;
  double mu_exact = 0.0;
  double lhs_exact = 0.0;
  double ratio_exact = 0.0;
  bool pass = false;
};

struct LevelKReport {
  int k = 1;
  std::uint64_t samples = 0;
  std::uint64_t seed = 0;
  std::vector<LevelKRow> rows;
  double worst_ratio = 0.0;
  bool pass = false;

  // Columns: set, k, mu, lhs, bound, ratio, mc_error, exact_ratio, verdict.
  std::string to_csv() const;
};

// Checks sum_{|S|=k} E[1_A x_S]^2 <= 2 e^2 mu^2 ln^k(e/mu) over the family.
// All sets must share the dimension. k in {1, 2}. Throws when an empirical
// measure falls below 10 / n_samples (set too small to test).
LevelKReport level_k_inequality_check(const std::vector<GaussianSet>& family,
                                      int k, std::uint64_t n_samples,
                                      std::uint64_t seed = 0);

// Tightness demo for the quadratic-form bound. With s = sqrt(d), matrices
// E_ij for 1 <= i < j <= s, and the conditioning event
// X = {|x_i| >= c d^{1/4} for all i <= s}, estimates
// E[ sum_{i<j} (x_i x_j)^2 | X ] by exact per-coordinate conditional sampling
// and compares with the closed form C(s,2) (1 + a phi(a)/Q(a))^2, a = c d^{1/4}.
struct TightnessPoint {
  int d = 0;
  double estimate = 0.0;
  double std_error = 0.0;
  double exact = 0.0;
};

struct TightnessReport {
  double c = 1.0;
  std::uint64_t samples_per_point = 0;
  std::uint64_t seed = 0;
  std::vector<TightnessPoint> points;
  double fitted_exponent = 0.0;        // log-log slope of estimate vs d
  double fitted_exponent_exact = 0.0;  // same for the closed-form values

  // Columns: d, estimate, std_error, exact.
  std::string to_csv() const;
};

// Closed form for E[q | X] above.
double hw_tightness_exact(int d, double c);
// One Monte Carlo point. d must be a perfect square with 2 <= sqrt(d) <= 8.
TightnessPoint hw_tightness_point(int d, std::uint64_t n_samples, double c = 1.0,
                                  std::uint64_t seed = 0);
// Full scaling report over a grid of d values (at least two for the fit).
TightnessReport hw_tightness_demo(const std::vector<int>& d_values,
                                  std::uint64_t n_samples, double c = 1.0,
                                  std::uint64_t seed = 0);

// Empirical means of the three isoperimetric quantities behind the
// quadratic-form tail bound, checked against their analytic ceilings:
//   f(y) = sqrt(sum_i (y^T M_i y)^2)            with E f <= sqrt(2m),
//   g(y) = sigma_max of the m x n matrix (M_i y)^T   with E g <= sqrt(m),
//   h(y) = sigma_max of the m x n matrix (M_i^T y)^T with E h <= sqrt(m),
// and the deterministic v = sigma_max of the m x n^2 flattening, which equals
// 1 for an orthonormal set.
struct IsoperimetricDiagnostic {
  int n = 0;
  int m = 0;
  std::uint64_t samples = 0;
  std::uint64_t seed = 0;
  double mean_f = 0.0;
  double mean_g = 0.0;
  double mean_h = 0.0;
  double v = 0.0;
  double bound_f = 0.0;
  double bound_gh = 0.0;
  bool pass = false;

  // Columns: quantity, mean, bound, verdict.
  std::string to_csv() const;
};

IsoperimetricDiagnostic isoperimetric_diagnostic(const QuadraticFormSet& forms,
                                                 std::uint64_t n_samples,
                                                 std::uint64_t seed = 0);

}  // namespace fiberlab
