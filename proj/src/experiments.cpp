#include "fiberlab/experiments.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "fiberlab/fiber.hpp"
#include "fiberlab/report.hpp"
#include "fiberlab/rng.hpp"

namespace fiberlab {
namespace {

constexpr std::uint64_t kPurposeCorpus = 0x636f7270;

void require_square(const ProtocolTree& tree, int cap, const char* what) {
  if (tree.alice_bits != tree.bob_bits)
    throw std::invalid_argument(
        fmt::format("{} needs a square protocol (alice and bob bit counts "
                    "must match)",
                    what));
  if (tree.alice_bits < 1 || tree.alice_bits > cap)
    throw std::invalid_argument(
        fmt::format("{} capped at 1 <= n <= {}", what, cap));
}

}  // namespace

double restriction_max_l11(const BooleanFn& h) {
  if (h.n < 1 || h.n > 8)
    throw std::invalid_argument("restriction scan capped at 1 <= n <= 8");
  const int n = h.n;
  const FourierSpectrum spec = walsh_hadamard(h);
  double best = 0.0;
  for (std::uint32_t fixed = 0; fixed < (1u << n); ++fixed) {
    // `assignment` picks the sign of each fixed coordinate (set bit = -1).
    std::uint32_t assignment = fixed;
    while (true) {
      // Level-one weight of the restricted function: the coefficient of a
      // free singleton {j} collects every original coefficient {j} u T with
      // T inside the fixed set, weighted by the assigned signs on T.
      double total = 0.0;
      for (int j = 0; j < n; ++j) {
        if (fixed & (1u << j)) continue;
        double coefficient = 0.0;
        std::uint32_t t = fixed;
        while (true) {
          const double sign =
              (std::popcount(t & assignment) & 1) ? -1.0 : 1.0;
          coefficient += sign * spec.coeff((1u << j) | t);
          if (t == 0) break;
          t = (t - 1) & fixed;
        }
        total += std::abs(coefficient);
      }
      best = std::max(best, total);
      if (assignment == 0) break;
      assignment = (assignment - 1) & fixed;
    }
  }
  return best;
}

std::string CoinScanReport::to_csv() const {
  std::string out = "rho,delta,t,bound,ratio,verdict\n";
  for (const CoinRow& row : rows) {
    out += join_csv(
        {format_double(row.rho), format_double(row.delta),
         has_bound ? format_double(restriction_max) : "",
         has_bound ? format_double(row.bound) : "", format_double(row.ratio),
         has_bound ? (row.pass ? "PASS" : "FAIL") : "SKIP"});
    out += '\n';
  }
  return out;
}

CoinScanReport coin_scan(const ProtocolTree& tree,
                         const std::vector<double>& rho_grid) {
  require_square(tree, 12, "coin scan");
  CoinScanReport report;
  report.n = tree.alice_bits;
  report.cost = tree.cost();

  const BooleanFn h = xor_fiber(tree);
  const FourierSpectrum spec = walsh_hadamard(h);
  const double base = spec.coeff(0);
  if (report.n <= 8) {
    report.has_bound = true;
    report.restriction_max = restriction_max_l11(h);
  }

  for (double rho : rho_grid) {
    if (!(std::abs(rho) < 1.0))
      throw std::invalid_argument("every bias must satisfy |rho| < 1");
    CoinRow row;
    row.rho = rho;
    row.delta = biased_expectation(spec, rho) - base;
    if (report.has_bound) {
      row.bound = std::log(1.0 / (1.0 - std::abs(rho))) *
                  report.restriction_max;
      row.pass = std::abs(row.delta) <= row.bound;  // exact, no tolerance
    } else {
      row.pass = true;  // vacuous: inequality not evaluated at this n
    }
    row.ratio = (report.cost == 0 || rho == 0.0)
                    ? 0.0
                    : std::abs(row.delta) /
                          (std::abs(rho) *
                           std::sqrt(static_cast<double>(report.cost)));
    report.rows.push_back(row);
  }
  report.pass = true;
  for (const CoinRow& row : report.rows) report.pass = report.pass && row.pass;
  return report;
}

std::string GapHammingReport::to_csv() const {
  std::string out = "quantity,value\n";
  auto row = [&](const char* name, const std::string& value) {
    out += join_csv({name, value});
    out += '\n';
  };
  row("n", std::to_string(n));
  row("c", format_double(c));
  row("rho", format_double(rho));
  row("threshold", std::to_string(threshold));
  row("mean_plus", format_double(mean_plus));
  row("mean_minus", format_double(mean_minus));
  row("advantage", format_double(advantage));
  row("promise_mass_plus", format_double(promise_mass_plus));
  row("promise_mass_minus", format_double(promise_mass_minus));
  row("promise_mean_plus", format_double(promise_mean_plus));
  row("promise_mean_minus", format_double(promise_mean_minus));
  row("promise_advantage", format_double(promise_advantage));
  row("slack_plus", format_double(slack_plus));
  row("slack_minus", format_double(slack_minus));
  row("hoeffding_exact", format_double(hoeffding_exact));
  row("hoeffding_bound", format_double(hoeffding_bound));
  row("hoeffding", hoeffding_pass ? "PASS" : "FAIL");
  return out;
}

GapHammingReport gap_hamming_demo(const ProtocolTree& tree, double c) {
  require_square(tree, 12, "gap-hamming demo");
  const int n = tree.alice_bits;
  if (c < 0.0 || c * c >= static_cast<double>(n))
    throw std::invalid_argument(
        "need 0 <= c < sqrt(n) so the bias rho = c/sqrt(n) lies in [0, 1)");

  GapHammingReport report;
  report.n = n;
  report.c = c;
  report.rho = c / std::sqrt(static_cast<double>(n));
  report.threshold =
      static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));

  const BooleanFn h = xor_fiber(tree);
  const FourierSpectrum spec = walsh_hadamard(h);
  report.mean_plus = biased_expectation(spec, report.rho);
  report.mean_minus = biased_expectation(spec, -report.rho);
  report.advantage = report.mean_plus - report.mean_minus;

  // Exact enumeration over z with product weights. A set bit encodes -1, so
  // under bias rho a set bit carries probability (1 - rho)/2.
  const double rho = report.rho;
  double mass_plus = 0.0, numerator_plus = 0.0;
  double mass_minus = 0.0, numerator_minus = 0.0;
  for (std::uint32_t z = 0; z < (1u << n); ++z) {
    const int minus_bits = std::popcount(z);
    const int sum = n - 2 * minus_bits;
    const double w_plus = std::pow((1.0 - rho) / 2.0, minus_bits) *
                          std::pow((1.0 + rho) / 2.0, n - minus_bits);
    const double w_minus = std::pow((1.0 + rho) / 2.0, minus_bits) *
                           std::pow((1.0 - rho) / 2.0, n - minus_bits);
    if (sum > report.threshold) {
      mass_plus += w_plus;
      numerator_plus += w_plus * h(z);
    }
    if (sum < -report.threshold) {
      mass_minus += w_minus;
      numerator_minus += w_minus * h(z);
    }
  }
  if (mass_plus == 0.0 || mass_minus == 0.0)
    throw std::domain_error(
        "a promise set is empty at this n (threshold excludes every point)");
  report.promise_mass_plus = mass_plus;
  report.promise_mass_minus = mass_minus;
  report.promise_mean_plus = numerator_plus / mass_plus;
  report.promise_mean_minus = numerator_minus / mass_minus;
  report.promise_advantage =
      report.promise_mean_plus - report.promise_mean_minus;
  report.slack_plus = 2.0 * (1.0 - mass_plus);
  report.slack_minus = 2.0 * (1.0 - mass_minus);

  // Exact two-sided deviation probability of sum z_i around its mean rho n,
  // via the binomial law of the number of -1 coordinates.
  const double spread = 5.0 * std::sqrt(static_cast<double>(n));
  double exact = 0.0;
  double binom = 1.0;  // C(n, k), updated incrementally
  for (int k = 0; k <= n; ++k) {
    const double sum = static_cast<double>(n - 2 * k);
    if (std::abs(sum - rho * n) >= spread)
      exact += binom * std::pow((1.0 - rho) / 2.0, k) *
               std::pow((1.0 + rho) / 2.0, n - k);
    binom = binom * (n - k) / (k + 1);
  }
  report.hoeffding_exact = exact;
  report.hoeffding_bound = 2.0 * std::exp(-12.5);
  report.hoeffding_pass = exact <= report.hoeffding_bound;
  return report;
}

std::string GrowthReport::to_csv() const {
  std::string out = "protocol_id,n,d,l11,l11_over_sqrt_d,l12,l12_norm\n";
  for (const GrowthRow& row : rows) {
    out += join_csv({row.id, std::to_string(row.n), std::to_string(row.d),
                     format_double(row.l11), format_double(row.ratio1),
                     format_double(row.l12), format_double(row.ratio2)});
    out += '\n';
  }
  out += join_csv({"max", "", "", "", format_double(max_ratio1), "",
                   format_double(max_ratio2)});
  out += '\n';
  return out;
}

GrowthReport growth_report(
    const std::vector<std::pair<std::string, ProtocolTree>>& corpus) {
  GrowthReport report;
  report.rows.resize(corpus.size());
  if (corpus.empty()) return report;
  const int shards = std::min<int>(kMonteCarloShards,
                                   static_cast<int>(corpus.size()));
  parallel_shards(shards, [&](int shard) {
    for (std::size_t i = static_cast<std::size_t>(shard); i < corpus.size();
         i += static_cast<std::size_t>(shards)) {
      const auto& [id, tree] = corpus[i];
      GrowthRow row;
      row.id = id;
      row.n = tree.alice_bits;
      row.d = tree.cost();
      const FourierSpectrum spec = walsh_hadamard(xor_fiber(tree));
      row.l11 = l1_level_weight(spec, 1);
      row.l12 = row.n >= 2 ? l1_level_weight(spec, 2) : 0.0;
      if (row.l11 > 0.0 && row.d > 0)
        row.ratio1 = row.l11 / std::sqrt(static_cast<double>(row.d));
      if (row.l12 > 0.0 && row.d > 0 && row.n >= 2)
        row.ratio2 = row.l12 / (std::pow(static_cast<double>(row.d), 1.5) *
                                std::pow(std::log(row.n), 3));
      report.rows[i] = std::move(row);
    }
  });
  for (const GrowthRow& row : report.rows) {
    report.max_ratio1 = std::max(report.max_ratio1, row.ratio1);
    report.max_ratio2 = std::max(report.max_ratio2, row.ratio2);
  }
  return report;
}

std::vector<ProtocolTree> generate_corpus(int count, int n, int d,
                                          std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("corpus count must be >= 0");
  std::vector<ProtocolTree> corpus;
  corpus.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    corpus.push_back(random_protocol(
        n, d, stream_id(kPurposeCorpus, seed, static_cast<std::uint64_t>(i))));
  return corpus;
}

std::string corpus_to_json_lines(const std::vector<ProtocolTree>& corpus) {
  std::string out;
  for (const ProtocolTree& tree : corpus) {
    out += protocol_to_json(tree).dump();
    out += '\n';
  }
  return out;
}

std::vector<ProtocolTree> corpus_from_json_lines(const std::string& text) {
  std::vector<ProtocolTree> corpus;
  std::istringstream stream(text);
  std::string line;
  while (std::getline(stream, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    corpus.push_back(protocol_from_json(nlohmann::json::parse(line)));
  }
  return corpus;
}

namespace {

ProtocolTree constant_protocol(int n, double value) {
  ProtocolTree tree;
  tree.alice_bits = n;
  tree.bob_bits = n;
  tree.nodes.push_back(ProtoNode{true, value, Party::kAlice, DynBitset{}, -1, -1});
  tree.root = 0;
  tree.validate();
  return tree;
}

// Alice reveals x_1, Bob replies y_1; the leaf spells out the product x_1 y_1
// (set bit = -1, so the product is -1 exactly when the bits differ).
ProtocolTree x1y1_protocol(int n) {
  ProtocolTree tree;
  tree.alice_bits = n;
  tree.bob_bits = n;
  auto leaf = [&](double v) {
    tree.nodes.push_back(ProtoNode{true, v, Party::kAlice, DynBitset{}, -1, -1});
    return static_cast<int>(tree.nodes.size() - 1);
  };
  DynBitset bob_table(tree.bob_domain());
  for (std::size_t y = 0; y < tree.bob_domain(); ++y)
    bob_table.set(y, (y & 1) != 0);
  auto bob_node = [&](int alice_bit) {
    const int same = leaf(alice_bit == 0 ? 1.0 : -1.0);
    const int differ = leaf(alice_bit == 0 ? -1.0 : 1.0);
    tree.nodes.push_back(
        ProtoNode{false, 0.0, Party::kBob, bob_table, same, differ});
    return static_cast<int>(tree.nodes.size() - 1);
  };
  DynBitset alice_table(tree.alice_domain());
  for (std::size_t x = 0; x < tree.alice_domain(); ++x)
    alice_table.set(x, (x & 1) != 0);
  const int zero = bob_node(0);
  const int one = bob_node(1);
  tree.nodes.push_back(
      ProtoNode{false, 0.0, Party::kAlice, alice_table, zero, one});
  tree.root = static_cast<int>(tree.nodes.size() - 1);
  tree.validate();
  return tree;
}

std::vector<std::string> split_colon(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(':', start);
    if (pos == std::string::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

int parse_int(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const int value = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw std::invalid_argument(fmt::format("bad {} '{}'", what, text));
  }
}

std::uint64_t parse_u64(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const std::uint64_t value = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw std::invalid_argument(fmt::format("bad {} '{}'", what, text));
  }
}

double parse_real(const std::string& text, const char* what) {
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    throw std::invalid_argument(fmt::format("bad {} '{}'", what, text));
  }
}

}  // namespace

ProtocolTree parse_protocol_spec(const std::string& spec, int n) {
  if (spec.rfind("file:", 0) == 0) {
    const std::string path = spec.substr(5);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument(fmt::format("cannot open '{}'", path));
    nlohmann::json j;
    in >> j;
    return protocol_from_json(j);
  }
  const std::vector<std::string> parts = split_colon(spec);
  const std::string& kind = parts[0];
  if (kind == "maj") {
    if (parts.size() != 2)
      throw std::invalid_argument("expected maj:D");
    return maj_xor_protocol(parse_int(parts[1], "block count"), n);
  }
  if (kind == "const") {
    if (parts.size() != 2)
      throw std::invalid_argument("expected const:V");
    return constant_protocol(n, parse_real(parts[1], "leaf value"));
  }
  if (kind == "x1y1") {
    if (parts.size() != 1)
      throw std::invalid_argument("expected bare x1y1");
    return x1y1_protocol(n);
  }
  if (kind == "parity") {
    if (parts.size() != 3)
      throw std::invalid_argument("expected parity:DEPTH:SEED");
    return from_parity_dt(random_parity_dt(n, parse_int(parts[1], "depth"),
                                           parse_u64(parts[2], "seed")));
  }
  if (kind == "random") {
    if (parts.size() != 3)
      throw std::invalid_argument("expected random:D:SEED");
    return random_protocol(n, parse_int(parts[1], "cost"),
                           parse_u64(parts[2], "seed"));
  }
  throw std::invalid_argument(
      fmt::format("unknown protocol spec '{}' (expected maj:D, const:V, "
                  "x1y1, parity:DEPTH:SEED, random:D:SEED, or file:PATH)",
                  spec));
}

}  // namespace fiberlab
