#include "fiberlab/gaussian_lab.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <utility>

#include "fiberlab/boolean_fn.hpp"
#include "fiberlab/fiber.hpp"

namespace fiberlab {

namespace {

constexpr std::uint64_t kPurposeSample = 0x67736d70;  // population sampling
constexpr std::uint64_t kPurposeRun = 0x636c6e72;     // clean-protocol walk
constexpr std::uint64_t kPurposeEta = 0x65746131;     // fallback sign pattern
constexpr std::uint64_t kPurposeFact = 0x66616374;    // Gaussian formula MC
constexpr std::uint64_t kPurposePower = 0x706f7772;   // standalone clean_check

constexpr int kMaxLevel1Dim = 12;
constexpr int kMaxLevel2Dim = 6;
constexpr std::uint64_t kRefreshDrawCap = 10'000'000;

int feature_dim(int level, int n) { return level == 1 ? n : n * n; }

// Level-2 feature: flattened zero-diagonal x⊗x, row-major, both triangles.
void write_feature(const Eigen::VectorXd& x, int level, double* out) {
  const int n = static_cast<int>(x.size());
  if (level == 1) {
    for (int i = 0; i < n; ++i) out[i] = x(i);
    return;
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out[i * n + j] = (i == j) ? 0.0 : x(i) * x(j);
}

Eigen::VectorXd feature_of(const Eigen::VectorXd& x, int level) {
  Eigen::VectorXd f(feature_dim(level, static_cast<int>(x.size())));
  write_feature(x, level, f.data());
  return f;
}

Eigen::MatrixXd feature_matrix(const Eigen::MatrixXd& pop, int level) {
  if (level == 1) return pop;
  const int n = static_cast<int>(pop.cols());
  Eigen::MatrixXd f(pop.rows(), n * n);
  for (Eigen::Index r = 0; r < pop.rows(); ++r) {
    const Eigen::VectorXd x = pop.row(r);
    write_feature(x, 2, f.row(r).data());
  }
  return f;
}

std::uint32_t sign_index(const double* x, int n) {
  std::uint32_t idx = 0;
  for (int i = 0; i < n; ++i)
    if (x[i] < 0.0) idx |= 1u << i;
  return idx;
}

long long bin_of(double value, int L) {
  return static_cast<long long>(std::floor(std::ldexp(value, L)));
}

int bits_for(long long bin) {
  const std::uint64_t mag =
      bin < 0 ? static_cast<std::uint64_t>(-(bin + 1)) + 1
              : static_cast<std::uint64_t>(bin);
  const int width = mag == 0 ? 1 : std::bit_width(mag);
  return 1 + width;  // sign bit + magnitude
}

// Deterministic power iteration on a symmetric PSD matrix.
std::pair<double, Eigen::VectorXd> top_eigen(const Eigen::MatrixXd& cov,
                                             RngStream& rng) {
  const Eigen::Index d = cov.rows();
  Eigen::VectorXd v(d);
  for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.normal();
  const double start_norm = v.norm();
  if (start_norm == 0.0) throw std::runtime_error("top_eigen: zero start");
  v /= start_norm;
  for (int iter = 0; iter < 300; ++iter) {
    Eigen::VectorXd w = cov * v;
    const double norm = w.norm();
    if (norm < 1e-300) {
      // Numerically zero matrix; any unit vector is an eigenvector.
      break;
    }
    w /= norm;
    const bool settled = (w - v).norm() < 1e-13 || (w + v).norm() < 1e-13;
    v = w;
    if (settled) break;
  }
  const double lambda = v.dot(cov * v);
  if (!std::isfinite(lambda))
    throw std::runtime_error("top_eigen: iteration diverged");
  // Canonical sign: first component of noticeable magnitude is positive.
  for (Eigen::Index i = 0; i < d; ++i) {
    if (std::abs(v(i)) > 1e-9) {
      if (v(i) < 0.0) v = -v;
      break;
    }
  }
  return {lambda, v};
}

Eigen::MatrixXd projected_covariance(
    const Eigen::MatrixXd& features,
    const std::vector<Eigen::VectorXd>& directions) {
  const double count = static_cast<double>(features.rows());
  const Eigen::RowVectorXd mean = features.colwise().sum() / count;
  Eigen::MatrixXd centered = features.rowwise() - mean;
  for (const Eigen::VectorXd& dir : directions)
    centered -= (centered * dir) * dir.transpose();
  return centered.transpose() * centered / count;
}

}  // namespace

void GaussianConfig::validate() const {
  if (n < 1) throw std::invalid_argument("GaussianConfig: n must be positive");
  if (!(T > 0.0)) throw std::invalid_argument("GaussianConfig: T must be > 0");
  if (L < 1) throw std::invalid_argument("GaussianConfig: L must be >= 1");
  if (!(lambda > 0.0))
    throw std::invalid_argument("GaussianConfig: lambda must be > 0");
  if (N_min < 1 || N < 10 * N_min)
    throw std::invalid_argument("GaussianConfig: need N >= 10 * N_min >= 10");
}

double box_mass(const GaussianConfig& cfg) {
  cfg.validate();
  if (cfg.untruncated) return 1.0;
  const double per_coord = std::erf(cfg.T / std::sqrt(2.0));
  return std::pow(per_coord, cfg.n);
}

Eigen::MatrixXd sample_truncated_gaussian(const GaussianConfig& cfg,
                                          RngStream& rng) {
  cfg.validate();
  Eigen::MatrixXd pop(cfg.N, cfg.n);
  for (int r = 0; r < cfg.N; ++r)
    for (int c = 0; c < cfg.n; ++c)
      pop(r, c) = cfg.untruncated ? rng.normal() : rng.truncated_normal(cfg.T);
  return pop;
}

Eigen::MatrixXd sample_truncated_gaussian(const GaussianConfig& cfg) {
  RngStream rng(cfg.seed, stream_id(kPurposeSample, 0, 0, 0));
  return sample_truncated_gaussian(cfg, rng);
}

void SignPattern::validate(int n) const {
  if (level == 1) {
    if (entries.size() != n)
      throw std::invalid_argument("SignPattern: level-1 length must be n");
    for (Eigen::Index i = 0; i < entries.size(); ++i)
      if (entries(i) != 1.0 && entries(i) != -1.0)
        throw std::invalid_argument("SignPattern: entries must be ±1");
    return;
  }
  if (level != 2) throw std::invalid_argument("SignPattern: level must be 1 or 2");
  if (entries.size() != static_cast<Eigen::Index>(n) * n)
    throw std::invalid_argument("SignPattern: level-2 length must be n^2");
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double e = entries(i * n + j);
      if (i == j) {
        if (e != 0.0)
          throw std::invalid_argument("SignPattern: diagonal must be zero");
      } else {
        if (e != 1.0 && e != -1.0)
          throw std::invalid_argument("SignPattern: entries must be ±1");
        if (e != entries(j * n + i))
          throw std::invalid_argument("SignPattern: matrix must be symmetric");
      }
    }
}

SignPattern default_sign_pattern(const ProtocolTree& tree, int level,
                                 std::uint64_t seed) {
  const int n = tree.alice_bits;
  SignPattern eta;
  eta.level = level;
  eta.entries = Eigen::VectorXd::Zero(feature_dim(level, n));
  if (n <= 14 && tree.bob_bits == n) {
    const FourierSpectrum spec = walsh_hadamard(xor_fiber(tree));
    if (level == 1) {
      for (int i = 0; i < n; ++i)
        eta.entries(i) = spec.coeff(1u << i) < 0.0 ? -1.0 : 1.0;
    } else {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (i == j) continue;
          const double c = spec.coeff((1u << i) | (1u << j));
          eta.entries(i * n + j) = c < 0.0 ? -1.0 : 1.0;
        }
    }
    eta.validate(n);
    return eta;
  }
  RngStream rng(seed, stream_id(kPurposeEta, static_cast<std::uint64_t>(level),
                                0, 0));
  if (level == 1) {
    for (int i = 0; i < n; ++i)
      eta.entries(i) = rng.uniform() < 0.5 ? -1.0 : 1.0;
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const double s = rng.uniform() < 0.5 ? -1.0 : 1.0;
        eta.entries(i * n + j) = s;
        eta.entries(j * n + i) = s;
      }
  }
  eta.validate(n);
  return eta;
}

CleanCheck clean_check(const Eigen::MatrixXd& population, int level,
                       const std::vector<Eigen::VectorXd>& directions,
                       double lambda) {
  if (population.rows() < 2)
    throw std::invalid_argument("clean_check: degenerate population");
  if (level != 1 && level != 2)
    throw std::invalid_argument("clean_check: level must be 1 or 2");
  const int dim = feature_dim(level, static_cast<int>(population.cols()));
  for (const Eigen::VectorXd& dir : directions)
    if (dir.size() != dim)
      throw std::invalid_argument("clean_check: direction dimension mismatch");
  const Eigen::MatrixXd cov =
      projected_covariance(feature_matrix(population, level), directions);
  RngStream rng(0, stream_id(kPurposePower, 0, 0, 0));
  auto [value, direction] = top_eigen(cov, rng);
  return {value, std::move(direction), value <= lambda};
}

namespace {

struct PartyState {
  Party who = Party::kAlice;
  Eigen::MatrixXd pop;                  // current population, rows = points
  std::vector<Eigen::VectorXd> dirs;    // revealed directions (orthonormal)
  std::vector<long long> bins;          // revealed bin index per direction
  DynBitset sign_allowed;               // accumulated original-bit constraint
  bool sign_constrained = false;
};

class CleanRunner {
 public:
  CleanRunner(const ProtocolTree& tree, int level, const SignPattern& eta,
              const GaussianConfig& cfg)
      : tree_(tree),
        level_(level),
        cfg_(cfg),
        rng_(cfg.seed, stream_id(kPurposeRun,
                                 static_cast<std::uint64_t>(level), 0, 0)) {
    cfg_.validate();
    tree_.validate();
    if (tree_.alice_bits != cfg_.n || tree_.bob_bits != cfg_.n)
      throw std::invalid_argument(
          "run_clean_protocol: protocol domain must be {±1}^n on both sides");
    if (level_ != 1 && level_ != 2)
      throw std::invalid_argument("run_clean_protocol: level must be 1 or 2");
    if ((level_ == 1 && cfg_.n > kMaxLevel1Dim) ||
        (level_ == 2 && cfg_.n > kMaxLevel2Dim))
      throw std::invalid_argument("run_clean_protocol: dimension cap exceeded");
    eta.validate(cfg_.n);
    if (eta.level != level_)
      throw std::invalid_argument("run_clean_protocol: eta level mismatch");

    // Z1 and Z2 are both tracked for every run; the run's own level uses the
    // supplied pattern, the other level the all-ones pattern.
    const int n = cfg_.n;
    eta1_ = Eigen::VectorXd::Ones(n);
    eta2_ = Eigen::VectorXd::Ones(n * n);
    for (int i = 0; i < n; ++i) eta2_(i * n + i) = 0.0;
    (level_ == 1 ? eta1_ : eta2_) = eta.entries;

    run_.cfg = cfg_;
    run_.level = level_;
    run_.protocol_cost = tree_.cost();
  }

  CleanupRun run() {
    alice_.who = Party::kAlice;
    bob_.who = Party::kBob;
    alice_.pop = sample_truncated_gaussian(cfg_, rng_);
    bob_.pop = sample_truncated_gaussian(cfg_, rng_);
    alice_.sign_allowed = DynBitset(tree_.alice_domain(), true);
    bob_.sign_allowed = DynBitset(tree_.bob_domain(), true);

    std::tie(run_.initial_z1, run_.initial_z2) = current_z();

    // Initial cleanup for both parties, then the walk: orthogonalize, replay
    // the original bit, clean up, repeat until a leaf (or an abort).
    cleanup(alice_);
    if (!run_.aborted) cleanup(bob_);
    int node = tree_.root;
    while (!run_.aborted && !tree_.nodes[node].is_leaf) {
      const ProtoNode& inner = tree_.nodes[node];
      PartyState& owner = inner.owner == Party::kAlice ? alice_ : bob_;
      orthogonalize(owner);
      if (run_.aborted) break;
      const int bit = original_bit(owner, inner);
      if (run_.aborted) break;
      node = bit ? inner.one_child : inner.zero_child;
      cleanup(owner);
    }
    if (!run_.aborted) run_.leaf_value = tree_.nodes[node].value;

    run_.alice_directions = alice_.dirs;
    run_.bob_directions = bob_.dirs;
    run_.final_x = std::move(alice_.pop);
    run_.final_y = std::move(bob_.pop);
    return std::move(run_);
  }

 private:
  int capacity() const {
    return level_ == 1 ? cfg_.n : cfg_.n * (cfg_.n - 1) / 2;
  }

  double dir_noise_floor() const {
    return 3.0 * std::sqrt(static_cast<double>(feature_dim(level_, cfg_.n)) /
                           static_cast<double>(cfg_.N));
  }

  Eigen::VectorXd center(const PartyState& p, int level) const {
    const double rows = static_cast<double>(p.pop.rows());
    if (p.pop.rows() == 0)
      return Eigen::VectorXd::Zero(feature_dim(level, cfg_.n));
    if (level == 1) return p.pop.colwise().sum().transpose() / rows;
    Eigen::MatrixXd second = p.pop.transpose() * p.pop / rows;
    second.diagonal().setZero();
    Eigen::VectorXd flat(cfg_.n * cfg_.n);
    for (int i = 0; i < cfg_.n; ++i)
      for (int j = 0; j < cfg_.n; ++j) flat(i * cfg_.n + j) = second(i, j);
    return flat;
  }

  std::pair<double, double> current_z() const {
    const Eigen::VectorXd ux = center(alice_, 1), uy = center(bob_, 1);
    const Eigen::VectorXd sx = center(alice_, 2), sy = center(bob_, 2);
    const double z1 = ux.dot(eta1_.cwiseProduct(uy));
    const double z2 = sx.dot(eta2_.cwiseProduct(sy));
    return {z1, z2};
  }

  void record(StepKind kind, Party who, Eigen::VectorXd direction,
              double message, int bits, bool refreshed) {
    StepRecord step;
    step.kind = kind;
    step.owner = who;
    step.direction = std::move(direction);
    step.message = message;
    step.message_bits = bits;
    step.population_x = static_cast<int>(alice_.pop.rows());
    step.population_y = static_cast<int>(bob_.pop.rows());
    step.refreshed = refreshed;
    step.center_x = center(alice_, level_);
    step.center_y = center(bob_, level_);
    std::tie(step.z1, step.z2) = current_z();
    run_.steps.push_back(std::move(step));
  }

  Eigen::VectorXd representative(const PartyState& p) {
    const auto row = rng_.uniform_int(static_cast<std::uint64_t>(p.pop.rows()));
    return p.pop.row(static_cast<Eigen::Index>(row));
  }

  void keep_rows(PartyState& p, const std::vector<Eigen::Index>& rows) {
    Eigen::MatrixXd next(static_cast<Eigen::Index>(rows.size()), cfg_.n);
    for (Eigen::Index i = 0; i < next.rows(); ++i)
      next.row(i) = p.pop.row(rows[static_cast<std::size_t>(i)]);
    p.pop = std::move(next);
  }

  // Rejection-refresh against all accumulated constraints; returns false (and
  // marks the run aborted) when fewer than N_min points survive the draw cap.
  bool refresh(PartyState& p) {
    Eigen::MatrixXd fresh(cfg_.N, cfg_.n);
    Eigen::VectorXd x(cfg_.n);
    Eigen::VectorXd fbuf(feature_dim(level_, cfg_.n));
    Eigen::Index got = 0;
    for (std::uint64_t draws = 0; draws < kRefreshDrawCap && got < cfg_.N;
         ++draws) {
      for (int c = 0; c < cfg_.n; ++c)
        x(c) = cfg_.untruncated ? rng_.normal() : rng_.truncated_normal(cfg_.T);
      if (p.sign_constrained &&
          !p.sign_allowed.test(sign_index(x.data(), cfg_.n)))
        continue;
      bool ok = true;
      if (!p.dirs.empty()) {
        write_feature(x, level_, fbuf.data());
        for (std::size_t k = 0; k < p.dirs.size(); ++k) {
          if (bin_of(fbuf.dot(p.dirs[k]), cfg_.L) != p.bins[k]) {
            ok = false;
            break;
          }
        }
      }
      if (!ok) continue;
      fresh.row(got++) = x;
    }
    if (got < cfg_.N_min) {
      run_.aborted = true;
      run_.abort_reason = "refresh-underflow";
      return false;
    }
    p.pop = fresh.topRows(got);
    return true;
  }

  // Shared tail of the two directional step kinds: bin a fresh
  // representative's projection, filter to the bin, refresh on underflow.
  void directional_reveal(PartyState& p, const Eigen::VectorXd& dir,
                          StepKind kind) {
    const Eigen::VectorXd rep = representative(p);
    const long long bin = bin_of(feature_of(rep, level_).dot(dir), cfg_.L);
    const Eigen::MatrixXd features = feature_matrix(p.pop, level_);
    std::vector<Eigen::Index> keep;
    keep.reserve(static_cast<std::size_t>(p.pop.rows()));
    for (Eigen::Index r = 0; r < p.pop.rows(); ++r)
      if (bin_of(features.row(r).dot(dir), cfg_.L) == bin) keep.push_back(r);
    keep_rows(p, keep);
    p.dirs.push_back(dir);
    p.bins.push_back(bin);
    bool refreshed = false;
    if (p.pop.rows() < cfg_.N_min) {
      refreshed = true;
      refresh(p);
    }
    record(kind, p.who, dir, std::ldexp(static_cast<double>(bin), -cfg_.L),
           bits_for(bin), refreshed);
  }

  // Step 3(a): unit component of eta ⊙ (other party's center) orthogonal to
  // the owner's revealed directions; skipped below the sampling noise floor.
  void orthogonalize(PartyState& owner) {
    if (static_cast<int>(owner.dirs.size()) >= capacity()) return;
    const PartyState& other = owner.who == Party::kAlice ? bob_ : alice_;
    const Eigen::VectorXd& eta = level_ == 1 ? eta1_ : eta2_;
    Eigen::VectorXd target = eta.cwiseProduct(center(other, level_));
    for (int pass = 0; pass < 2; ++pass)
      for (const Eigen::VectorXd& d : owner.dirs) target -= d.dot(target) * d;
    const double norm = target.norm();
    if (norm < dir_noise_floor()) return;
    directional_reveal(owner, target / norm, StepKind::kOrthogonalize);
  }

  // Step 3(b): replay the underlying protocol's message on the representative
  // signs; the population keeps exactly the inputs that send the same bit.
  int original_bit(PartyState& owner, const ProtoNode& node) {
    const Eigen::VectorXd rep = representative(owner);
    const int bit = node.message.test(sign_index(rep.data(), cfg_.n)) ? 1 : 0;
    std::vector<Eigen::Index> keep;
    keep.reserve(static_cast<std::size_t>(owner.pop.rows()));
    for (Eigen::Index r = 0; r < owner.pop.rows(); ++r) {
      const Eigen::VectorXd x = owner.pop.row(r);
      if ((node.message.test(sign_index(x.data(), cfg_.n)) ? 1 : 0) == bit)
        keep.push_back(r);
    }
    keep_rows(owner, keep);
    DynBitset allowed(node.message.size());
    for (std::size_t s = 0; s < node.message.size(); ++s)
      allowed.set(s, (node.message.test(s) ? 1 : 0) == bit);
    owner.sign_allowed &= allowed;
    owner.sign_constrained = true;
    bool refreshed = false;
    if (owner.pop.rows() < cfg_.N_min) {
      refreshed = true;
      refresh(owner);
    }
    record(StepKind::kOriginal, owner.who, Eigen::VectorXd{},
           bit ? -1.0 : 1.0, 1, refreshed);
    return bit;
  }

  // Step 3(c): repeated threshold test of the projected covariance. The
  // trigger is noise-guarded: eigenvalues below 0.7·λ never fire, above 1.6·λ
  // always fire, and in between a bootstrap of the top-direction variance
  // decides against λ + 3·sigma_boot.
  void cleanup(PartyState& owner) {
    while (!run_.aborted &&
           static_cast<int>(owner.dirs.size()) < capacity()) {
      if (owner.pop.rows() < 2) return;
      const Eigen::MatrixXd cov = projected_covariance(
          feature_matrix(owner.pop, level_), owner.dirs);
      auto [value, direction] = top_eigen(cov, rng_);
      if (value < 0.7 * cfg_.lambda) return;
      if (value < 1.6 * cfg_.lambda &&
          value < cfg_.lambda + 3.0 * bootstrap_sd(owner, direction))
        return;
      // Re-orthogonalize against the owner's directions for an exact Gram.
      for (int pass = 0; pass < 2; ++pass)
        for (const Eigen::VectorXd& d : owner.dirs)
          direction -= d.dot(direction) * d;
      const double norm = direction.norm();
      if (norm < 1e-9) return;
      directional_reveal(owner, direction / norm, StepKind::kCleanup);
    }
  }

  // Bootstrap standard deviation of the population variance along `dir`.
  double bootstrap_sd(const PartyState& p, const Eigen::VectorXd& dir) {
    const Eigen::MatrixXd features = feature_matrix(p.pop, level_);
    const Eigen::VectorXd proj = features * dir;
    const auto count = static_cast<std::uint64_t>(proj.size());
    constexpr int kResamples = 24;
    double sum = 0.0, sum_sq = 0.0;
    for (int b = 0; b < kResamples; ++b) {
      double s = 0.0, s2 = 0.0;
      for (std::uint64_t i = 0; i < count; ++i) {
        const double v = proj(static_cast<Eigen::Index>(rng_.uniform_int(count)));
        s += v;
        s2 += v * v;
      }
      const double mean = s / static_cast<double>(count);
      const double var = s2 / static_cast<double>(count) - mean * mean;
      sum += var;
      sum_sq += var * var;
    }
    const double mean_var = sum / kResamples;
    const double spread = sum_sq / kResamples - mean_var * mean_var;
    return std::sqrt(std::max(0.0, spread));
  }

  ProtocolTree tree_;
  int level_;
  GaussianConfig cfg_;
  RngStream rng_;
  Eigen::VectorXd eta1_, eta2_;
  PartyState alice_, bob_;
  CleanupRun run_;
};

}  // namespace

CleanupRun run_clean_protocol(const ProtocolTree& tree, int level,
                              const SignPattern& eta,
                              const GaussianConfig& cfg) {
  return CleanRunner(tree, level, eta, cfg).run();
}

FactCheck check_fact_boolean_to_real(const ProtocolTree& tree, std::uint32_t S,
                                     std::uint64_t N, std::uint64_t seed) {
  tree.validate();
  const int n = tree.alice_bits;
  if (tree.bob_bits != n || n > 12)
    throw std::invalid_argument(
        "check_fact_boolean_to_real: need equal sides with n <= 12");
  const int order = std::popcount(S);
  if (order < 1 || order > 2 || S >= (1u << n))
    throw std::invalid_argument(
        "check_fact_boolean_to_real: |S| must be 1 or 2 within [n]");
  if (N == 0)
    throw std::invalid_argument("check_fact_boolean_to_real: N must be > 0");

  FactCheck out;
  out.lhs = walsh_hadamard(xor_fiber(tree)).coeff(S);

  std::vector<double> sums(kMonteCarloShards, 0.0);
  std::vector<double> sums_sq(kMonteCarloShards, 0.0);
  parallel_shards(kMonteCarloShards, [&](unsigned shard) {
    RngStream rng(seed, stream_id(kPurposeFact, S, shard, 0));
    const std::uint64_t count =
        N / kMonteCarloShards + (shard < N % kMonteCarloShards ? 1 : 0);
    std::vector<double> x(static_cast<std::size_t>(n)),
        y(static_cast<std::size_t>(n));
    double local = 0.0, local_sq = 0.0;
    for (std::uint64_t it = 0; it < count; ++it) {
      std::uint32_t ix = 0, iy = 0;
      for (int i = 0; i < n; ++i) {
        x[static_cast<std::size_t>(i)] = rng.normal();
        y[static_cast<std::size_t>(i)] = rng.normal();
        if (x[static_cast<std::size_t>(i)] < 0.0) ix |= 1u << i;
        if (y[static_cast<std::size_t>(i)] < 0.0) iy |= 1u << i;
      }
      double stat = evaluate(tree, ix, iy).value;
      for (int i = 0; i < n; ++i)
        if ((S >> i) & 1u)
          stat *= x[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i)];
      local += stat;
      local_sq += stat * stat;
    }
    sums[shard] = local;
    sums_sq[shard] = local_sq;
  });

  double total = 0.0, total_sq = 0.0;
  for (unsigned s = 0; s < kMonteCarloShards; ++s) {
    total += sums[s];
    total_sq += sums_sq[s];
  }
  const double count = static_cast<double>(N);
  const double mean = total / count;
  const double var = std::max(0.0, total_sq / count - mean * mean);
  const double factor =
      std::pow(std::atan(1.0) * 2.0, order);  // (pi/2)^{|S|}
  out.rhs = factor * mean;
  out.stderr_rhs = factor * std::sqrt(var / count);
  out.z_score = out.stderr_rhs > 0.0 ? (out.rhs - out.lhs) / out.stderr_rhs
                                     : 0.0;
  return out;
}

std::vector<std::pair<std::uint32_t, FactCheck>> check_fact_all_low_levels(
    const ProtocolTree& tree, std::uint64_t N, std::uint64_t seed) {
  tree.validate();
  const int n = tree.alice_bits;
  if (tree.bob_bits != n || n > 12)
    throw std::invalid_argument(
        "check_fact_all_low_levels: need equal sides with n <= 12");
  if (N == 0)
    throw std::invalid_argument("check_fact_all_low_levels: N must be > 0");

  std::vector<std::uint32_t> subsets;
  for (std::uint32_t S = 1; S < (1u << n); ++S)
    if (std::popcount(S) <= 2) subsets.push_back(S);
  const std::size_t width = subsets.size();

  const FourierSpectrum spec = walsh_hadamard(xor_fiber(tree));

  std::vector<std::vector<double>> sums(kMonteCarloShards),
      sums_sq(kMonteCarloShards);
  parallel_shards(kMonteCarloShards, [&](unsigned shard) {
    RngStream rng(seed, stream_id(kPurposeFact, 0xa11, shard, 0));
    const std::uint64_t count =
        N / kMonteCarloShards + (shard < N % kMonteCarloShards ? 1 : 0);
    std::vector<double> local(width, 0.0), local_sq(width, 0.0);
    std::vector<double> prod(static_cast<std::size_t>(n));
    for (std::uint64_t it = 0; it < count; ++it) {
      std::uint32_t ix = 0, iy = 0;
      for (int i = 0; i < n; ++i) {
        const double xi = rng.normal();
        const double yi = rng.normal();
        prod[static_cast<std::size_t>(i)] = xi * yi;
        if (xi < 0.0) ix |= 1u << i;
        if (yi < 0.0) iy |= 1u << i;
      }
      const double base = evaluate(tree, ix, iy).value;
      for (std::size_t s = 0; s < width; ++s) {
        double stat = base;
        std::uint32_t mask = subsets[s];
        while (mask != 0) {
          const int i = std::countr_zero(mask);
          stat *= prod[static_cast<std::size_t>(i)];
          mask &= mask - 1;
        }
        local[s] += stat;
        local_sq[s] += stat * stat;
      }
    }
    sums[shard] = std::move(local);
    sums_sq[shard] = std::move(local_sq);
  });

  std::vector<std::pair<std::uint32_t, FactCheck>> out;
  out.reserve(width);
  const double count = static_cast<double>(N);
  for (std::size_t s = 0; s < width; ++s) {
    double total = 0.0, total_sq = 0.0;
    for (unsigned sh = 0; sh < kMonteCarloShards; ++sh) {
      total += sums[sh][s];
      total_sq += sums_sq[sh][s];
    }
    const double mean = total / count;
    const double var = std::max(0.0, total_sq / count - mean * mean);
    const double factor =
        std::pow(std::atan(1.0) * 2.0, std::popcount(subsets[s]));
    FactCheck check;
    check.lhs = spec.coeff(subsets[s]);
    check.rhs = factor * mean;
    check.stderr_rhs = factor * std::sqrt(var / count);
    check.z_score = check.stderr_rhs > 0.0
                        ? (check.rhs - check.lhs) / check.stderr_rhs
                        : 0.0;
    out.emplace_back(subsets[s], check);
  }
  return out;
}

MartingaleReport martingale_report(const CleanupRun& run) {
  MartingaleReport report;
  double prev_z1 = run.initial_z1, prev_z2 = run.initial_z2;
  for (const StepRecord& step : run.steps) {
    const double d1 = step.z1 - prev_z1;
    const double d2 = step.z2 - prev_z2;
    report.delta_z1.push_back(d1);
    report.delta_z2.push_back(d2);
    report.qv_z1 += d1 * d1;
    report.qv_z2 += d2 * d2;
    prev_z1 = step.z1;
    prev_z2 = step.z2;
  }
  return report;
}

EnsembleMartingale ensemble_martingale(const std::vector<CleanupRun>& runs) {
  if (runs.size() < 30)
    throw std::invalid_argument("ensemble_martingale: need at least 30 runs");
  std::size_t max_steps = 0;
  for (const CleanupRun& run : runs)
    max_steps = std::max(max_steps, run.steps.size());

  EnsembleMartingale out;
  std::vector<MartingaleReport> reports;
  reports.reserve(runs.size());
  for (const CleanupRun& run : runs) reports.push_back(martingale_report(run));

  for (std::size_t idx = 0; idx < max_steps; ++idx) {
    int count = 0;
    double sum = 0.0, sum_sq = 0.0;
    for (const MartingaleReport& r : reports) {
      if (idx >= r.delta_z1.size()) continue;
      ++count;
      sum += r.delta_z1[idx];
      sum_sq += r.delta_z1[idx] * r.delta_z1[idx];
    }
    const double mean = count > 0 ? sum / count : 0.0;
    double stderr_mean = 0.0;
    if (count > 1) {
      const double var =
          std::max(0.0, (sum_sq - count * mean * mean) / (count - 1));
      stderr_mean = std::sqrt(var / count);
    }
    out.counts.push_back(count);
    out.mean_dz1.push_back(mean);
    out.stderr_dz1.push_back(stderr_mean);
  }

  double qv_sum = 0.0, qv_sq = 0.0;
  for (const MartingaleReport& r : reports) {
    qv_sum += r.qv_z1;
    qv_sq += r.qv_z1 * r.qv_z1;
  }
  const double count = static_cast<double>(reports.size());
  out.mean_qv_z1 = qv_sum / count;
  const double qv_var =
      std::max(0.0, (qv_sq - count * out.mean_qv_z1 * out.mean_qv_z1) /
                        (count - 1.0));
  out.stderr_qv_z1 = std::sqrt(qv_var / count);
  return out;
}

nlohmann::json step_to_json(const StepRecord& step, int index) {
  static const char* kKindNames[] = {"orthogonalize", "original", "cleanup"};
  nlohmann::json j;
  j["step"] = index;
  j["kind"] = kKindNames[static_cast<int>(step.kind)];
  j["owner"] = step.owner == Party::kAlice ? "A" : "B";
  j["direction"] = std::vector<double>(
      step.direction.data(), step.direction.data() + step.direction.size());
  j["message"] = step.message;
  j["message_bits"] = step.message_bits;
  j["population_x"] = step.population_x;
  j["population_y"] = step.population_y;
  j["refreshed"] = step.refreshed;
  j["center_x"] = std::vector<double>(
      step.center_x.data(), step.center_x.data() + step.center_x.size());
  j["center_y"] = std::vector<double>(
      step.center_y.data(), step.center_y.data() + step.center_y.size());
  j["z1"] = step.z1;
  j["z2"] = step.z2;
  return j;
}

std::string run_to_json_lines(const CleanupRun& run) {
  std::string out;
  nlohmann::json header;
  header["type"] = "run";
  header["level"] = run.level;
  header["n"] = run.cfg.n;
  header["seed"] = run.cfg.seed;
  header["protocol_cost"] = run.protocol_cost;
  header["aborted"] = run.aborted;
  header["abort_reason"] = run.abort_reason;
  header["steps"] = run.total_steps();
  header["initial_z1"] = run.initial_z1;
  header["initial_z2"] = run.initial_z2;
  header["leaf_value"] = run.leaf_value;
  out += header.dump();
  out += '\n';
  for (int i = 0; i < run.total_steps(); ++i) {
    out += step_to_json(run.steps[static_cast<std::size_t>(i)], i).dump();
    out += '\n';
  }
  return out;
}

}  // namespace fiberlab
