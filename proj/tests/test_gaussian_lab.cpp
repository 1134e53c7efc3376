#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <catch2/catch_amalgamated.hpp>
#include <nlohmann/json.hpp>

#include "fiberlab/boolean_fn.hpp"
#include "fiberlab/fiber.hpp"
#include "fiberlab/gaussian_lab.hpp"
#include "fiberlab/protocol.hpp"
#include "fiberlab/rng.hpp"
#include "oracle_utils.hpp"

using namespace fiberlab;

namespace {

ProtocolTree constant_tree(int n, double value) {
  ProtocolTree t;
  t.alice_bits = n;
  t.bob_bits = n;
  t.nodes.push_back(ProtoNode{true, value, Party::kAlice, DynBitset{}, -1, -1});
  t.root = 0;
  return t;
}

// Alice announces x_1, Bob announces x_1 * y_1; leaves spell out the product.
ProtocolTree product_tree() {
  ProtocolTree t;
  t.alice_bits = 1;
  t.bob_bits = 1;
  auto leaf = [&](double v) {
    t.nodes.push_back(ProtoNode{true, v, Party::kAlice, DynBitset{}, -1, -1});
    return static_cast<int>(t.nodes.size() - 1);
  };
  auto bob_node = [&](int a) {
    DynBitset table(2);
    table.set(0, a == 1);
    table.set(1, a == 0);
    const int plus = leaf(1.0);
    const int minus = leaf(-1.0);
    t.nodes.push_back(ProtoNode{false, 0.0, Party::kBob, table, plus, minus});
    return static_cast<int>(t.nodes.size() - 1);
  };
  DynBitset alice_table(2);
  alice_table.set(1, true);
  const int zero = bob_node(0);
  const int one = bob_node(1);
  t.nodes.push_back(
      ProtoNode{false, 0.0, Party::kAlice, alice_table, zero, one});
  t.root = static_cast<int>(t.nodes.size() - 1);
  return t;
}

void check_run_invariants(const CleanupRun& run, int depth_bound) {
  CHECK(run.total_steps() <= depth_bound);
  const double bits_budget =
      run.cfg.L + std::log2(run.cfg.T * run.cfg.n) + 1e-9;
  for (const StepRecord& step : run.steps)
    CHECK(step.message_bits <= bits_budget);
  for (const auto* dirs : {&run.alice_directions, &run.bob_directions})
    for (std::size_t i = 0; i < dirs->size(); ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        const double gram = (*dirs)[i].dot((*dirs)[j]);
        CHECK(std::abs(gram - (i == j ? 1.0 : 0.0)) < 1e-8);
      }
  for (const auto* pop : {&run.final_x, &run.final_y})
    CHECK(pop->cwiseAbs().maxCoeff() <= run.cfg.T + 1e-12);
}

}  // namespace

TEST_CASE("config validation") {
  GaussianConfig cfg;
  cfg.validate();
  GaussianConfig bad = cfg;
  bad.T = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.L = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.N = 9 * bad.N_min;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("truncated population respects the box and the exact variance") {
  GaussianConfig cfg;
  cfg.n = 4;
  cfg.T = 1.5;
  cfg.N = 50000;
  cfg.N_min = 5000;
  cfg.seed = 7;
  const Eigen::MatrixXd pop = sample_truncated_gaussian(cfg);
  REQUIRE(pop.rows() == cfg.N);
  REQUIRE(pop.cols() == cfg.n);
  CHECK(pop.cwiseAbs().maxCoeff() <= cfg.T);

  const double expected = oracle::truncated_normal_variance(cfg.T);
  for (int c = 0; c < cfg.n; ++c) {
    const double var = pop.col(c).squaredNorm() / cfg.N -
                       std::pow(pop.col(c).mean(), 2);
    CHECK(std::abs(var - expected) < 5.0 * std::sqrt(2.0 / cfg.N));
  }
}

TEST_CASE("untruncated flag produces a plain gaussian population") {
  GaussianConfig cfg;
  cfg.n = 2;
  cfg.T = 1.0;
  cfg.N = 50000;
  cfg.N_min = 5000;
  cfg.untruncated = true;
  const Eigen::MatrixXd pop = sample_truncated_gaussian(cfg);
  CHECK(pop.cwiseAbs().maxCoeff() > cfg.T);  // escapes the box
  const double var = pop.col(0).squaredNorm() / cfg.N -
                     std::pow(pop.col(0).mean(), 2);
  CHECK(std::abs(var - 1.0) < 5.0 * std::sqrt(2.0 / cfg.N));
}

TEST_CASE("box mass matches the closed form and the parameter regime") {
  GaussianConfig cfg;  // defaults: n = 8, T = 4
  const double per_coord = 2.0 * oracle::normal_cdf(cfg.T) - 1.0;
  CHECK(box_mass(cfg) == Catch::Approx(std::pow(per_coord, cfg.n)).epsilon(1e-12));
  CHECK(box_mass(cfg) >= 0.75);

  // Empirical cross-check: fraction of raw Gaussian vectors inside the box.
  RngStream rng(3, 0);
  const int samples = 200000;
  int inside = 0;
  for (int s = 0; s < samples; ++s) {
    bool ok = true;
    for (int c = 0; c < cfg.n; ++c)
      if (std::abs(rng.normal()) > cfg.T) ok = false;
    inside += ok ? 1 : 0;
  }
  const double frac = static_cast<double>(inside) / samples;
  CHECK(std::abs(frac - box_mass(cfg)) < 5.0 / std::sqrt(samples));
}

TEST_CASE("sign pattern validation") {
  SignPattern eta;
  eta.level = 1;
  eta.entries = Eigen::VectorXd::Ones(3);
  eta.validate(3);
  eta.entries(1) = 0.5;
  CHECK_THROWS_AS(eta.validate(3), std::invalid_argument);

  SignPattern mat;
  mat.level = 2;
  mat.entries = Eigen::VectorXd::Ones(9);
  CHECK_THROWS_AS(mat.validate(3), std::invalid_argument);  // nonzero diagonal
  for (int i = 0; i < 3; ++i) mat.entries(i * 3 + i) = 0.0;
  mat.validate(3);
  mat.entries(1) = -1.0;  // break symmetry: (0,1) vs (1,0)
  CHECK_THROWS_AS(mat.validate(3), std::invalid_argument);
}

TEST_CASE("default sign pattern follows the exact fiber spectrum") {
  // maj_xor(3,4): level-1 coefficients are +1/2 on the first three singletons
  // and 0 on the fourth; zeros default to +1.
  const ProtocolTree t = maj_xor_protocol(3, 4);
  const SignPattern eta1 = default_sign_pattern(t, 1);
  REQUIRE(eta1.entries.size() == 4);
  for (int i = 0; i < 4; ++i) CHECK(eta1.entries(i) == 1.0);

  // Flip the protocol's sign: leaves negated, so all coefficients negate.
  ProtocolTree negated = t;
  for (ProtoNode& node : negated.nodes)
    if (node.is_leaf) node.value = -node.value;
  const SignPattern eta1n = default_sign_pattern(negated, 1);
  for (int i = 0; i < 3; ++i) CHECK(eta1n.entries(i) == -1.0);
  CHECK(eta1n.entries(3) == 1.0);  // zero coefficient stays +1

  const SignPattern eta2 = default_sign_pattern(t, 2);
  REQUIRE(eta2.entries.size() == 16);
  eta2.validate(4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(eta2.entries(i * 4 + j) == (i == j ? 0.0 : 1.0));
}

TEST_CASE("gaussian formula check: constant protocol") {
  const FactCheck check =
      check_fact_boolean_to_real(constant_tree(3, 1.0), 0b001, 100000, 5);
  CHECK(check.lhs == 0.0);
  CHECK(std::abs(check.z_score) <= 4.0);
}

TEST_CASE("gaussian formula check: product protocol hits coefficient one") {
  const FactCheck check =
      check_fact_boolean_to_real(product_tree(), 0b1, 400000, 11);
  CHECK(check.lhs == 1.0);
  CHECK(std::abs(check.rhs - 1.0) < 0.02);
  CHECK(std::abs(check.z_score) <= 4.0);
}

TEST_CASE("gaussian formula check: majority coefficient") {
  const FactCheck check =
      check_fact_boolean_to_real(maj_xor_protocol(3, 3), 0b001, 400000, 2);
  CHECK(check.lhs == 0.5);
  CHECK(std::abs(check.z_score) <= 4.0);
}

TEST_CASE("gaussian formula check rejects bad subsets") {
  const ProtocolTree t = maj_xor_protocol(3, 3);
  CHECK_THROWS_AS(check_fact_boolean_to_real(t, 0, 1000), std::invalid_argument);
  CHECK_THROWS_AS(check_fact_boolean_to_real(t, 0b111, 1000),
                  std::invalid_argument);
}

TEST_CASE("batched gaussian formula check covers every low subset") {
  const ProtocolTree t = maj_xor_protocol(3, 3);
  const auto checks = check_fact_all_low_levels(t, 200000, 4);
  REQUIRE(checks.size() == 3 + 3);  // three singletons, three pairs
  const FourierSpectrum spec = walsh_hadamard(xor_fiber(t));
  for (const auto& [S, check] : checks) {
    CHECK(check.lhs == spec.coeff(S));
    CHECK(std::abs(check.z_score) <= 4.5);
  }
}

TEST_CASE("clean check on an isotropic population") {
  GaussianConfig cfg;
  cfg.n = 5;
  cfg.N = 20000;
  cfg.N_min = 2000;
  cfg.seed = 13;
  const Eigen::MatrixXd pop = sample_truncated_gaussian(cfg);
  const CleanCheck check = clean_check(pop, 1, {}, 100.0);
  CHECK(check.clean);
  CHECK(check.eigenvalue > 0.8);
  CHECK(check.eigenvalue < 1.3);
}

TEST_CASE("clean check finds a conditioned coordinate") {
  // Population conditioned on |x_1| >= 2 inside the [-4, 4] box.
  GaussianConfig cfg;
  cfg.n = 4;
  cfg.N = 60000;
  cfg.N_min = 1000;
  cfg.seed = 21;
  const Eigen::MatrixXd raw = sample_truncated_gaussian(cfg);
  std::vector<Eigen::Index> rows;
  for (Eigen::Index r = 0; r < raw.rows(); ++r)
    if (std::abs(raw(r, 0)) >= 2.0) rows.push_back(r);
  Eigen::MatrixXd pop(static_cast<Eigen::Index>(rows.size()), cfg.n);
  for (Eigen::Index i = 0; i < pop.rows(); ++i)
    pop.row(i) = raw.row(rows[static_cast<std::size_t>(i)]);
  REQUIRE(pop.rows() > 1000);

  const CleanCheck check = clean_check(pop, 1, {}, 100.0);
  CHECK(std::abs(check.direction(0)) > 0.99);

  // Quadrature oracle for Var(x | 2 <= |x| <= 4): symmetric, so the mean is 0.
  const double mass = oracle::simpson(oracle::normal_pdf, 2.0, 4.0);
  const double second =
      oracle::simpson([](double x) { return x * x * oracle::normal_pdf(x); },
                      2.0, 4.0);
  const double expected = second / mass;
  const double tol =
      6.0 * expected * std::sqrt(2.0 / static_cast<double>(pop.rows()));
  CHECK(std::abs(check.eigenvalue - expected) < tol);

  // Self-consistency: slice the population to one bin along the returned
  // direction; the in-bin variance collapses below the bin width squared.
  const int L = 8;
  const Eigen::VectorXd proj = pop * check.direction;
  const long long bin = static_cast<long long>(std::floor(std::ldexp(proj(0), L)));
  std::vector<double> in_bin;
  for (Eigen::Index r = 0; r < proj.size(); ++r)
    if (static_cast<long long>(std::floor(std::ldexp(proj(r), L))) == bin)
      in_bin.push_back(proj(r));
  REQUIRE(in_bin.size() >= 2);
  double mean = 0.0;
  for (double v : in_bin) mean += v;
  mean /= static_cast<double>(in_bin.size());
  double var = 0.0;
  for (double v : in_bin) var += (v - mean) * (v - mean);
  var /= static_cast<double>(in_bin.size());
  CHECK(var <= std::pow(std::ldexp(1.0, -L), 2));
}

TEST_CASE("clean check input validation") {
  Eigen::MatrixXd tiny(1, 3);
  tiny.setZero();
  CHECK_THROWS_AS(clean_check(tiny, 1, {}, 1.0), std::invalid_argument);
}

TEST_CASE("constant protocol runs with no steps and a flat martingale") {
  GaussianConfig cfg;
  cfg.n = 6;
  cfg.seed = 3;
  SignPattern eta = default_sign_pattern(constant_tree(6, 0.25), 1);
  const CleanupRun run = run_clean_protocol(constant_tree(6, 0.25), 1, eta, cfg);
  CHECK(!run.aborted);
  CHECK(run.total_steps() == 0);
  CHECK(run.leaf_value == 0.25);
  CHECK(std::abs(run.initial_z1) < 0.01);
  const MartingaleReport report = martingale_report(run);
  CHECK(report.qv_z1 == 0.0);
  CHECK(report.qv_z2 == 0.0);
}

TEST_CASE("level-1 runs on majority-of-xor satisfy the hard invariants") {
  const ProtocolTree t = maj_xor_protocol(3, 8);
  const SignPattern eta = default_sign_pattern(t, 1);
  for (std::uint64_t seed : {1ull, 2ull}) {
    GaussianConfig cfg;
    cfg.n = 8;
    cfg.seed = seed;
    const CleanupRun run = run_clean_protocol(t, 1, eta, cfg);
    CHECK(!run.aborted);
    CHECK(run.protocol_cost == 4);
    check_run_invariants(run, 2 * cfg.n + 2 * run.protocol_cost);

    // Bin-fixing: the final population of each party spreads less than the
    // bin width along each of that party's revealed directions.
    const double width = std::ldexp(1.0, -cfg.L);
    for (const Eigen::VectorXd& dir : run.alice_directions) {
      const Eigen::VectorXd proj = run.final_x * dir;
      CHECK(proj.maxCoeff() - proj.minCoeff() < width);
    }
    for (const Eigen::VectorXd& dir : run.bob_directions) {
      const Eigen::VectorXd proj = run.final_y * dir;
      CHECK(proj.maxCoeff() - proj.minCoeff() < width);
    }

    // Alice's original step comes after her orthogonalization step, and the
    // martingale barely moves on it.
    const MartingaleReport report = martingale_report(run);
    bool seen_alice_orth = false;
    for (int i = 0; i < run.total_steps(); ++i) {
      const StepRecord& step = run.steps[static_cast<std::size_t>(i)];
      if (step.owner != Party::kAlice) continue;
      if (step.kind == StepKind::kOrthogonalize) seen_alice_orth = true;
      if (step.kind == StepKind::kOriginal && seen_alice_orth)
        CHECK(std::abs(report.delta_z1[static_cast<std::size_t>(i)]) < 0.1);
    }
  }
}

TEST_CASE("runs are deterministic in the seed") {
  const ProtocolTree t = maj_xor_protocol(3, 8);
  const SignPattern eta = default_sign_pattern(t, 1);
  GaussianConfig cfg;
  cfg.n = 8;
  cfg.seed = 5;
  const CleanupRun a = run_clean_protocol(t, 1, eta, cfg);
  const CleanupRun b = run_clean_protocol(t, 1, eta, cfg);
  CHECK(run_to_json_lines(a) == run_to_json_lines(b));
  cfg.seed = 6;
  const CleanupRun c = run_clean_protocol(t, 1, eta, cfg);
  CHECK(run_to_json_lines(a) != run_to_json_lines(c));
}

TEST_CASE("small threshold exercises cleanup steps within the depth bound") {
  // With lambda far below the isotropic eigenvalue (~1), the initial cleanup
  // slices until the direction capacity is reached. Coarse bins (L = 2) keep
  // the rejection refreshes affordable.
  GaussianConfig cfg;
  cfg.n = 3;
  cfg.L = 2;
  cfg.lambda = 0.2;
  cfg.seed = 9;
  const ProtocolTree t = constant_tree(3, 1.0);
  const CleanupRun run = run_clean_protocol(t, 1, default_sign_pattern(t, 1), cfg);
  int cleanups = 0;
  for (const StepRecord& step : run.steps)
    if (step.kind == StepKind::kCleanup) ++cleanups;
  CHECK(cleanups >= 2);
  CHECK(run.total_steps() <= 2 * cfg.n);
  check_run_invariants(run, 2 * cfg.n);
  if (!run.aborted) {
    // Capacity exhausted on both sides: every direction slot is used.
    CHECK(run.alice_directions.size() == 3);
    CHECK(run.bob_directions.size() == 3);
  }
}

TEST_CASE("fine bins force the documented structured abort") {
  // At L = 8 a second directional constraint on the same party shrinks the
  // acceptance rate below what the draw cap can refresh.
  GaussianConfig cfg;
  cfg.n = 3;
  cfg.L = 8;
  cfg.lambda = 0.2;
  cfg.seed = 4;
  const ProtocolTree t = constant_tree(3, 1.0);
  const CleanupRun run = run_clean_protocol(t, 1, default_sign_pattern(t, 1), cfg);
  CHECK(run.aborted);
  CHECK(run.abort_reason == "refresh-underflow");
  CHECK(run.total_steps() >= 1);
  check_run_invariants(run, 2 * cfg.n);
}

TEST_CASE("level-2 runs respect their invariants") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    GaussianConfig cfg;
    cfg.n = 5;
    cfg.seed = seed;
    const ProtocolTree t = random_protocol(5, 3, seed);
    const SignPattern eta = default_sign_pattern(t, 2);
    const CleanupRun run = run_clean_protocol(t, 2, eta, cfg);
    CHECK(run.level == 2);
    check_run_invariants(run, 2 * cfg.n * cfg.n);
    for (const StepRecord& step : run.steps) {
      CHECK(step.center_x.size() == 25);
      CHECK(step.center_x.norm() < cfg.n * cfg.T);
      CHECK(step.center_y.norm() < cfg.n * cfg.T);
    }
  }
}

TEST_CASE("level mismatches are rejected") {
  const ProtocolTree t = maj_xor_protocol(3, 4);
  GaussianConfig cfg;
  cfg.n = 4;
  const SignPattern eta1 = default_sign_pattern(t, 1);
  CHECK_THROWS_AS(run_clean_protocol(t, 2, eta1, cfg), std::invalid_argument);
  GaussianConfig wrong = cfg;
  wrong.n = 5;
  CHECK_THROWS_AS(run_clean_protocol(t, 1, eta1, wrong), std::invalid_argument);
}

TEST_CASE("ensemble martingale: mean-zero increments and quadratic variation") {
  const ProtocolTree t = maj_xor_protocol(3, 4);
  const SignPattern eta = default_sign_pattern(t, 1);
  const int runs_count = 64;
  std::vector<CleanupRun> runs(runs_count);
  parallel_shards(kMonteCarloShards, [&](unsigned shard) {
    for (int i = static_cast<int>(shard); i < runs_count;
         i += static_cast<int>(kMonteCarloShards)) {
      GaussianConfig cfg;
      cfg.n = 4;
      cfg.L = 6;
      cfg.N = 4000;
      cfg.N_min = 400;
      cfg.seed = 1000 + static_cast<std::uint64_t>(i);
      runs[static_cast<std::size_t>(i)] = run_clean_protocol(t, 1, eta, cfg);
    }
  });
  int aborted = 0;
  for (const CleanupRun& run : runs) aborted += run.aborted ? 1 : 0;
  CHECK(aborted == 0);

  const EnsembleMartingale ens = ensemble_martingale(runs);
  for (std::size_t idx = 0; idx < ens.counts.size(); ++idx) {
    if (ens.counts[idx] < 30) continue;
    CHECK(std::abs(ens.mean_dz1[idx]) <= 4.0 * ens.stderr_dz1[idx]);
  }

  // Quadratic-variation direction check against the exact level-1 weight.
  const double l11 = l1_level_weight(walsh_hadamard(xor_fiber(t)), 1);
  CHECK(l11 == 1.5);
  CHECK(4.0 * std::sqrt(ens.mean_qv_z1) >= l11 - 3.0 * ens.stderr_qv_z1);
  CHECK(ens.mean_qv_z1 > 0.25);
  CHECK(ens.mean_qv_z1 < 8.0);

  CHECK_THROWS_AS(ensemble_martingale(std::vector<CleanupRun>(5)),
                  std::invalid_argument);
}

TEST_CASE("run trace serializes one step per line with stable keys") {
  GaussianConfig cfg;
  cfg.n = 4;
  cfg.L = 6;
  cfg.N = 4000;
  cfg.N_min = 400;
  cfg.seed = 2;
  const ProtocolTree t = maj_xor_protocol(3, 4);
  const CleanupRun run =
      run_clean_protocol(t, 1, default_sign_pattern(t, 1), cfg);
  const std::string lines = run_to_json_lines(run);
  const std::size_t newline_count =
      static_cast<std::size_t>(std::count(lines.begin(), lines.end(), '\n'));
  CHECK(newline_count == static_cast<std::size_t>(run.total_steps()) + 1);
  CHECK(lines.find("\"kind\"") != std::string::npos);
  CHECK(lines.find("\"z1\"") != std::string::npos);
  const nlohmann::json header =
      nlohmann::json::parse(lines.substr(0, lines.find('\n')));
  CHECK(header["level"] == 1);
  CHECK(header["aborted"] == false);
}
