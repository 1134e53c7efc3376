#pragma once

// Gaussian-space simulation of clean protocols.
//
// A protocol over sign vectors is replayed on truncated-Gaussian inputs held
// as per-party sample populations. Three step kinds appear in a run:
//   * orthogonalization — before speaking, the owner reveals the binned inner
//     product of a fresh representative of their population with the unit
//     component of eta ⊙ (other party's center) orthogonal to the directions
//     they already revealed;
//   * original — the owner replays the underlying protocol's message bit on
//     the coordinate signs of a fresh representative;
//   * cleanup — while the owner's population covariance (of x at level 1, of
//     the flattened zero-diagonal x⊗x at level 2), restricted to the
//     complement of revealed directions, has top eigenvalue above the
//     threshold, the owner reveals the binned projection onto the top
//     eigenvector.
// Every revealed direction bins its projections to width 2^-L, populations
// are filtered to the revealed bin, and underfull populations are refreshed
// by rejection sampling against all accumulated constraints.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fiberlab/protocol.hpp"
#include "fiberlab/rng.hpp"

namespace fiberlab {

struct GaussianConfig {
  int n = 8;              // ambient dimension
  double T = 4.0;         // coordinates conditioned to [-T, T]
  int L = 8;              // messages are multiples of 2^-L
  double lambda = 100.0;  // cleanup threshold on the top covariance eigenvalue
  int N = 20000;          // population size
  int N_min = 500;        // refresh/abort watermark
  std::uint64_t seed = 0;
  bool untruncated = false;  // sampling helpers skip the box conditioning

  // T > 0, L >= 1, lambda > 0, N >= 10 * N_min, n >= 1.
  void validate() const;
};

// Probability that a standard normal vector lands in the box [-T, T]^n.
double box_mass(const GaussianConfig& cfg);

// N x n matrix of i.i.d. coordinates, each standard normal conditioned to
// [-T, T] (or unconditioned when cfg.untruncated). Deterministic in the seed.
Eigen::MatrixXd sample_truncated_gaussian(const GaussianConfig& cfg);
Eigen::MatrixXd sample_truncated_gaussian(const GaussianConfig& cfg,
                                          RngStream& rng);

// Sign pattern eta: a ±1 vector at level 1, a symmetric ±1 matrix with zero
// diagonal at level 2 (stored flattened, row-major, dimension n²).
struct SignPattern {
  int level = 1;
  Eigen::VectorXd entries;  // length n (level 1) or n² (level 2)

  void validate(int n) const;
};

// Sign pattern of the exact XOR-fiber spectrum at the matching level (zero
// coefficients map to +1); falls back to seeded uniform ±1 when the fiber is
// out of reach (n > 14).
SignPattern default_sign_pattern(const ProtocolTree& tree, int level,
                                 std::uint64_t seed = 0);

enum class StepKind : std::uint8_t { kOrthogonalize, kOriginal, kCleanup };

struct StepRecord {
  StepKind kind = StepKind::kOriginal;
  Party owner = Party::kAlice;
  Eigen::VectorXd direction;  // unit feature-space vector; empty for original
  double message = 0.0;       // binned value, or the ±1 original bit
  int message_bits = 1;
  int population_x = 0;  // surviving sizes after the step (and any refresh)
  int population_y = 0;
  bool refreshed = false;            // a refresh ran as part of this step
  Eigen::VectorXd center_x, center_y;  // level-matched centers of mass
  double z1 = 0.0;  // <mean(X), eta ⊙ mean(Y)> with the level-1 eta
  double z2 = 0.0;  // <sigma(X), eta ⊙ sigma(Y)>_F with the level-2 eta
};

struct CleanupRun {
  GaussianConfig cfg;
  int level = 1;
  int protocol_cost = 0;
  bool aborted = false;
  std::string abort_reason;
  std::vector<StepRecord> steps;
  std::vector<Eigen::VectorXd> alice_directions;  // orthonormal per party
  std::vector<Eigen::VectorXd> bob_directions;
  double initial_z1 = 0.0;  // Z values of the starting populations
  double initial_z2 = 0.0;
  double leaf_value = 0.0;  // defined when !aborted
  Eigen::MatrixXd final_x, final_y;

  int total_steps() const { return static_cast<int>(steps.size()); }
};

// Simulates one random root-to-leaf walk of the clean protocol built from
// `tree`. Requires tree.alice_bits == tree.bob_bits == cfg.n, with cfg.n <= 12
// at level 1 and <= 6 at level 2. The eta pattern must match the level. An
// underfull branch that cannot be refreshed aborts the run (recorded, not
// thrown).
CleanupRun run_clean_protocol(const ProtocolTree& tree, int level,
                              const SignPattern& eta,
                              const GaussianConfig& cfg);

// Top eigenvalue and eigenvector of the empirical feature covariance of
// `population`, restricted to the orthogonal complement of `directions`
// (level 2 additionally restricts to the zero-diagonal subspace). Power
// iteration with a deterministic seeded start.
struct CleanCheck {
  double eigenvalue = 0.0;
  Eigen::VectorXd direction;
  bool clean = false;  // eigenvalue <= lambda
};
CleanCheck clean_check(const Eigen::MatrixXd& population, int level,
                       const std::vector<Eigen::VectorXd>& directions,
                       double lambda);

// Exact-vs-Monte-Carlo check of the Gaussian formula for fiber coefficients:
// lhs = h^(S) exactly; rhs = (pi/2)^{|S|} E[C(sgn x, sgn y) x_S y_S] estimated
// over N untruncated Gaussian pairs. Requires |S| in {1, 2}, n <= 12.
struct FactCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double stderr_rhs = 0.0;
  double z_score = 0.0;
};
FactCheck check_fact_boolean_to_real(const ProtocolTree& tree, std::uint32_t S,
                                     std::uint64_t N, std::uint64_t seed = 0);

// Batched variant: one shared sample pass estimating every subset with
// |S| in {1, 2}, in increasing packed-mask order. Much cheaper than calling
// the single-subset version per S.
std::vector<std::pair<std::uint32_t, FactCheck>> check_fact_all_low_levels(
    const ProtocolTree& tree, std::uint64_t N, std::uint64_t seed = 0);

// Per-run martingale diagnostics.
struct MartingaleReport {
  std::vector<double> delta_z1, delta_z2;  // one entry per step
  double qv_z1 = 0.0;                      // sum of squared increments
  double qv_z2 = 0.0;
};
MartingaleReport martingale_report(const CleanupRun& run);

// Ensemble mean-zero test: per step index with >= 30 surviving runs, the
// studentized mean of the Z1 increment. Requires >= 30 runs.
struct EnsembleMartingale {
  std::vector<int> counts;          // runs contributing at each step index
  std::vector<double> mean_dz1;     // mean increment per index
  std::vector<double> stderr_dz1;   // standard error per index
  double mean_qv_z1 = 0.0;
  double stderr_qv_z1 = 0.0;
};
EnsembleMartingale ensemble_martingale(const std::vector<CleanupRun>& runs);

// One JSON object per step (deterministic key order via nlohmann sorting).
nlohmann::json step_to_json(const StepRecord& step, int index);
std::string run_to_json_lines(const CleanupRun& run);

}  // namespace fiberlab
