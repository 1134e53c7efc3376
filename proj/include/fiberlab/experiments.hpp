#pragma once

// Batch experiment drivers over protocol corpora: the coin-problem scan
// (exact bias differences against the exact restriction maximum of the
// level-one weight), the gap-Hamming advantage demo (exact enumeration under
// the correlated pair distributions), level-weight growth reports, and seeded
// corpus generation. These back the command-line surface in cli.hpp.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fiberlab/boolean_fn.hpp"
#include "fiberlab/protocol.hpp"

namespace fiberlab {

// ---------------------------------------------------------------------------
// Coin-problem scan.

// Exact maximum of the level-one weight L_{1,1} over all 3^n coordinate
// restrictions of h (each coordinate free, fixed to +1, or fixed to -1),
// including the empty restriction. Requires n <= 8.
double restriction_max_l11(const BooleanFn& h);

struct CoinRow {
  double rho = 0.0;
  double delta = 0.0;  // E_{mu_rho}[h] - E_{mu_0}[h], exact
  double bound = 0.0;  // ln(1/(1-|rho|)) * restriction_max
  double ratio = 0.0;  // |delta| / (|rho| sqrt(d)), 0 when degenerate
  bool pass = false;   // |delta| <= bound, no tolerance
};

struct CoinScanReport {
  int n = 0;
  int cost = 0;
  bool has_bound = false;         // restriction maximum computed (n <= 8)
  double restriction_max = 0.0;
  std::vector<CoinRow> rows;
  bool pass = false;

  // Columns: rho, delta, t, bound, ratio, verdict.
  std::string to_csv() const;
};

// Exact scan over the bias grid. Requires a square protocol with n <= 12;
// the restriction maximum and the inequality verdicts are produced when
// n <= 8 (otherwise rows carry ratio information only and pass vacuously).
// Every |rho| must be < 1.
CoinScanReport coin_scan(const ProtocolTree& tree,
                         const std::vector<double>& rho_grid);

// ---------------------------------------------------------------------------
// Gap-Hamming demo.

struct GapHammingReport {
  int n = 0;
  double c = 1.0;
  double rho = 0.0;     // c / sqrt(n)
  int threshold = 0;    // ceil(sqrt(n)); ties excluded from both promises
  double mean_plus = 0.0;          // E under the +rho pair distribution
  double mean_minus = 0.0;         // E under the -rho pair distribution
  double advantage = 0.0;          // difference of the above
  double promise_mass_plus = 0.0;  // Pr_{+rho}[sum z_i > threshold]
  double promise_mass_minus = 0.0; // Pr_{-rho}[sum z_i < -threshold]
  double promise_mean_plus = 0.0;  // E conditioned on the + promise
  double promise_mean_minus = 0.0; // E conditioned on the - promise
  double promise_advantage = 0.0;
  double slack_plus = 0.0;         // 2 Pr_{+rho}[promise fails]
  double slack_minus = 0.0;        // 2 Pr_{-rho}[promise fails]
  double hoeffding_exact = 0.0;    // Pr_{+rho}[|sum z_i - rho n| >= 5 sqrt(n)]
  double hoeffding_bound = 0.0;    // 2 exp(-12.5)
  bool hoeffding_pass = false;

  // Rows: quantity, value (one per field), ending with the verdict row.
  std::string to_csv() const;
};

// Exact enumeration demo. Requires a square protocol with n <= 12 and
// 0 <= c < sqrt(n) (so the bias rho = c/sqrt(n) lies in [0, 1)). Throws
// std::domain_error when a promise set is empty at this n.
GapHammingReport gap_hamming_demo(const ProtocolTree& tree, double c = 1.0);

// ---------------------------------------------------------------------------
// Growth report.

struct GrowthRow {
  std::string id;
  int n = 0;
  int d = 0;
  double l11 = 0.0;
  double ratio1 = 0.0;  // l11 / sqrt(d); 0 when l11 = 0 or d = 0
  double l12 = 0.0;
  double ratio2 = 0.0;  // l12 / (d^{3/2} ln^3 n); 0 when degenerate
};

struct GrowthReport {
  std::vector<GrowthRow> rows;  // input order
  double max_ratio1 = 0.0;
  double max_ratio2 = 0.0;

  // Columns: protocol_id, n, d, l11, l11_over_sqrt_d, l12, l12_norm;
  // a final summary row carries the two maxima.
  std::string to_csv() const;
};

// Exact level-1/level-2 weights per corpus entry; rows are computed in
// parallel but reported in input order.
GrowthReport growth_report(
    const std::vector<std::pair<std::string, ProtocolTree>>& corpus);

// ---------------------------------------------------------------------------
// Corpora and protocol spec strings.

// `count` seeded random protocols over n bits with cost d.
std::vector<ProtocolTree> generate_corpus(int count, int n, int d,
                                          std::uint64_t seed);
// One protocol JSON object per line.
std::string corpus_to_json_lines(const std::vector<ProtocolTree>& corpus);
std::vector<ProtocolTree> corpus_from_json_lines(const std::string& text);

// Builders addressed by compact spec strings (used by the CLI):
//   "maj:D"            majority-of-XOR with D blocks over n coordinates
//   "const:V"          constant protocol with leaf value V
//   "x1y1"             Alice reveals x_1, Bob replies x_1 y_1 (the product)
//   "parity:DEPTH:SEED" protocol simulating a random parity decision tree
//   "random:D:SEED"    random cost-D protocol tree
//   "file:PATH"        protocol JSON loaded from a file
ProtocolTree parse_protocol_spec(const std::string& spec, int n);

}  // namespace fiberlab
