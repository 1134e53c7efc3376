#include "fiberlab/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "fiberlab/boolean_fn.hpp"
#include "fiberlab/concentration.hpp"
#include "fiberlab/experiments.hpp"
#include "fiberlab/fiber.hpp"
#include "fiberlab/gadget.hpp"
#include "fiberlab/gaussian_lab.hpp"
#include "fiberlab/protocol.hpp"
#include "fiberlab/report.hpp"
#include "fiberlab/rng.hpp"

namespace fiberlab {
namespace {

constexpr std::uint64_t kPurposeCliForms = 0x666f726d;

std::vector<double> parse_real_list(const std::string& text) {
  std::vector<double> values;
  std::stringstream stream(text);
  std::string field;
  while (std::getline(stream, field, ',')) {
    if (field.empty()) continue;
    std::size_t used = 0;
    values.push_back(std::stod(field, &used));
    if (used != field.size())
      throw std::invalid_argument(fmt::format("bad number '{}'", field));
  }
  if (values.empty()) throw std::invalid_argument("empty number list");
  return values;
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> values;
  for (double v : parse_real_list(text)) {
    if (v != std::floor(v))
      throw std::invalid_argument("expected an integer list");
    values.push_back(static_cast<int>(v));
  }
  return values;
}

// Writes the report and converts a FAIL verdict anywhere in it into exit 1.
int finish(const std::string& content, const std::string& out_path) {
  if (out_path.empty())
    fmt::print("{}", content);
  else
    write_text_file(out_path, content);
  return content.find("FAIL") != std::string::npos ? 1 : 0;
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

QuadraticFormSet seeded_form_set(int m, int dim, std::uint64_t seed) {
  RngStream rng(seed, stream_id(kPurposeCliForms, static_cast<std::uint64_t>(m),
                                static_cast<std::uint64_t>(dim)));
  std::vector<Eigen::MatrixXd> seeds;
  for (int s = 0; s < m; ++s) {
    Eigen::MatrixXd matrix(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) matrix(i, j) = rng.normal();
    seeds.push_back(matrix);
  }
  return QuadraticFormSet::gram_schmidt(dim, seeds);
}

std::vector<GaussianSet> builtin_level_k_family(int dim) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<GaussianSet> family;
  family.push_back(halfspace_set(dim, 0.5));
  family.push_back(halfspace_set(dim, 1.0));
  family.push_back(halfspace_set(dim, 2.0));
  family.push_back(product_set(
      std::vector<std::pair<double, double>>(static_cast<std::size_t>(dim),
                                             {-1.0, 1.0}),
      "symmetric-box"));
  std::vector<std::pair<double, double>> shifted(
      static_cast<std::size_t>(dim), {-1.0, 1.0});
  shifted[0] = {0.0, 2.0};
  family.push_back(product_set(std::move(shifted), "shifted-box"));
  family.push_back(product_set(
      std::vector<std::pair<double, double>>(static_cast<std::size_t>(dim),
                                             {0.0, inf}),
      "orthant"));
  return family;
}

nlohmann::json tail_report_json(const TailReport& report) {
  nlohmann::json points = nlohmann::json::array();
  for (const TailPoint& p : report.points)
    points.push_back({{"r", p.r},
                      {"empirical", p.empirical},
                      {"ci_low", p.ci_low},
                      {"ci_high", p.ci_high},
                      {"bound", p.bound},
                      {"verdict", p.pass ? "PASS" : "FAIL"}});
  return {{"statistic", report.statistic},
          {"samples", report.samples},
          {"z", report.z},
          {"seed", report.seed},
          {"points", points}};
}

struct GlobalFlags {
  std::uint64_t seed = 0;
  std::string out_path;
  std::string format = "csv";
  bool json() const { return format == "json"; }
};

// ---------------------------------------------------------------------------
// Subcommand runners (parsing already done; any library exception escapes to
// cli_main, which maps precondition violations to exit 2).

int run_fiber(const GlobalFlags& flags, const std::string& protocol_spec,
              int n, int k, bool table) {
  const ProtocolTree tree = parse_protocol_spec(protocol_spec, n);
  const BooleanFn h = xor_fiber(tree);
  const FourierSpectrum spec = walsh_hadamard(h);
  const double value = l1_level_weight(spec, k);
  if (flags.json()) {
    nlohmann::json j{{"protocol", protocol_spec},
                     {"n", n},
                     {"k", k},
                     {"l1k", value}};
    if (table) {
      nlohmann::json values = nlohmann::json::array();
      for (double v : h.values) values.push_back(v);
      j["h"] = values;
    }
    return finish(dump_json(j), flags.out_path);
  }
  std::string out = "protocol,n,k,l1k\n";
  out += join_csv({protocol_spec, std::to_string(n), std::to_string(k),
                   format_double(value)});
  out += '\n';
  if (table) {
    out += "z,h\n";
    for (std::size_t z = 0; z < h.values.size(); ++z) {
      out += join_csv({std::to_string(z), format_double(h.values[z])});
      out += '\n';
    }
  }
  return finish(out, flags.out_path);
}

int run_growth(const GlobalFlags& flags, const std::string& corpus_path,
               const std::string& maj_list, int random_count, int n, int d) {
  std::vector<std::pair<std::string, ProtocolTree>> corpus;
  if (!corpus_path.empty()) {
    std::ifstream in(corpus_path, std::ios::binary);
    if (!in)
      throw std::invalid_argument(
          fmt::format("cannot open '{}'", corpus_path));
    std::stringstream buffer;
    buffer << in.rdbuf();
    std::vector<ProtocolTree> trees = corpus_from_json_lines(buffer.str());
    for (std::size_t i = 0; i < trees.size(); ++i)
      corpus.emplace_back(fmt::format("corpus:{}", i), std::move(trees[i]));
  } else if (!maj_list.empty()) {
    for (int block : parse_int_list(maj_list))
      corpus.emplace_back(fmt::format("maj:{}", block),
                          maj_xor_protocol(block, block));
  } else if (random_count > 0) {
    std::vector<ProtocolTree> trees =
        generate_corpus(random_count, n, d, flags.seed);
    for (std::size_t i = 0; i < trees.size(); ++i)
      corpus.emplace_back(fmt::format("random:{}:{}:{}", n, d, i),
                          std::move(trees[i]));
  } else {
    throw std::invalid_argument(
        "growth needs one of --corpus, --maj, or --random-count");
  }
  const GrowthReport report = growth_report(corpus);
  if (flags.json()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const GrowthRow& row : report.rows)
      rows.push_back({{"protocol_id", row.id},
                      {"n", row.n},
                      {"d", row.d},
                      {"l11", row.l11},
                      {"l11_over_sqrt_d", row.ratio1},
                      {"l12", row.l12},
                      {"l12_norm", row.ratio2}});
    return finish(dump_json({{"rows", rows},
                             {"max_ratio1", report.max_ratio1},
                             {"max_ratio2", report.max_ratio2}}),
                  flags.out_path);
  }
  return finish(report.to_csv(), flags.out_path);
}

int run_gadget(const GlobalFlags& flags, const std::string& name, int embed,
               bool spectrum_table) {
  Gadget g = builtin_gadget(name);
  for (int i = 0; i < embed; ++i) g = balance_embed(g);
  const GadgetSpectrum spec = gadget_fourier(g);
  const auto [arg_s, arg_t] = argmax_gadget_coeff(spec);
  const double max_coeff = std::abs(spec.coeff(arg_s, arg_t));
  const double floor = std::pow(2.0, -(g.m1 + g.m2) / 2.0);
  if (flags.json()) {
    nlohmann::json j{{"name", name},         {"embed", embed},
                     {"m1", g.m1},           {"m2", g.m2},
                     {"balanced", check_balanced(g)},
                     {"max_abs_coeff", max_coeff},
                     {"argmax_S", arg_s},    {"argmax_T", arg_t},
                     {"averaging_floor", floor}};
    if (spectrum_table) {
      nlohmann::json rows = nlohmann::json::array();
      for (std::uint32_t t = 0; t < (1u << g.m2); ++t)
        for (std::uint32_t s = 0; s < (1u << g.m1); ++s)
          rows.push_back({{"S", s}, {"T", t}, {"coeff", spec.coeff(s, t)}});
      j["spectrum"] = rows;
    }
    return finish(dump_json(j), flags.out_path);
  }
  std::string out =
      "name,m1,m2,balanced,max_abs_coeff,argmax_S,argmax_T,averaging_floor\n";
  out += join_csv({name, std::to_string(g.m1), std::to_string(g.m2),
                   check_balanced(g) ? "true" : "false",
                   format_double(max_coeff), std::to_string(arg_s),
                   std::to_string(arg_t), format_double(floor)});
  out += '\n';
  if (spectrum_table) {
    out += "S,T,coeff\n";
    for (std::uint32_t t = 0; t < (1u << g.m2); ++t)
      for (std::uint32_t s = 0; s < (1u << g.m1); ++s) {
        out += join_csv({std::to_string(s), std::to_string(t),
                         format_double(spec.coeff(s, t))});
        out += '\n';
      }
  }
  return finish(out, flags.out_path);
}

int run_clean_sim(const GlobalFlags& flags, const std::string& protocol_spec,
                  int n, int level, double lambda, int bits, double box,
                  int population, int population_min, int runs, bool trace) {
  const ProtocolTree tree = parse_protocol_spec(protocol_spec, n);
  GaussianConfig base;
  base.n = n;
  base.lambda = lambda;
  base.L = bits;
  base.T = box;
  base.N = population;
  base.N_min = population_min;
  const SignPattern eta = default_sign_pattern(tree, level);

  if (trace) {
    if (runs != 1)
      throw std::invalid_argument("--trace requires --runs 1");
    GaussianConfig cfg = base;
    cfg.seed = flags.seed;
    const CleanupRun run = run_clean_protocol(tree, level, eta, cfg);
    return finish(run_to_json_lines(run), flags.out_path);
  }

  if (runs < 1) throw std::invalid_argument("--runs must be >= 1");
  std::vector<CleanupRun> results(static_cast<std::size_t>(runs));
  const int shards = std::min(kMonteCarloShards, runs);
  parallel_shards(shards, [&](int shard) {
    for (int i = shard; i < runs; i += shards) {
      GaussianConfig cfg = base;
      cfg.seed = flags.seed + static_cast<std::uint64_t>(i);
      results[static_cast<std::size_t>(i)] =
          run_clean_protocol(tree, level, eta, cfg);
    }
  });

  const int depth_bound =
      level == 1 ? 2 * n + 2 * tree.cost() : 2 * n * n;
  const double bits_budget = bits + std::log2(box * n) + 1e-9;
  nlohmann::json json_rows = nlohmann::json::array();
  std::string out =
      "run,seed,steps,aborted,reason,leaf,z1_first,z1_last,z2_last,max_bits,"
      "verdict\n";
  for (int i = 0; i < runs; ++i) {
    const CleanupRun& run = results[static_cast<std::size_t>(i)];
    bool ok = run.total_steps() <= depth_bound;
    int max_bits = 0;
    for (const StepRecord& step : run.steps) {
      max_bits = std::max(max_bits, step.message_bits);
      if (step.message_bits > bits_budget) ok = false;
      if (run.level == 2 &&
          (step.center_x.norm() >= n * box || step.center_y.norm() >= n * box))
        ok = false;
    }
    for (const auto* dirs : {&run.alice_directions, &run.bob_directions})
      for (std::size_t a = 0; a < dirs->size(); ++a)
        for (std::size_t b = 0; b <= a; ++b) {
          const double target = a == b ? 1.0 : 0.0;
          if (std::abs((*dirs)[a].dot((*dirs)[b]) - target) > 1e-8) ok = false;
        }
    const double z1_last =
        run.steps.empty() ? run.initial_z1 : run.steps.back().z1;
    const double z2_last =
        run.steps.empty() ? run.initial_z2 : run.steps.back().z2;
    if (flags.json()) {
      json_rows.push_back({{"run", i},
                           {"seed", run.cfg.seed},
                           {"steps", run.total_steps()},
                           {"aborted", run.aborted},
                           {"reason", run.abort_reason},
                           {"leaf", run.leaf_value},
                           {"z1_first", run.initial_z1},
                           {"z1_last", z1_last},
                           {"z2_last", z2_last},
                           {"max_bits", max_bits},
                           {"verdict", ok ? "PASS" : "FAIL"}});
    } else {
      out += join_csv({std::to_string(i), std::to_string(run.cfg.seed),
                       std::to_string(run.total_steps()),
                       run.aborted ? "true" : "false", run.abort_reason,
                       format_double(run.leaf_value),
                       format_double(run.initial_z1), format_double(z1_last),
                       format_double(z2_last), std::to_string(max_bits),
                       ok ? "PASS" : "FAIL"});
      out += '\n';
    }
  }
  if (flags.json()) return finish(dump_json({{"runs", json_rows}}), flags.out_path);
  return finish(out, flags.out_path);
}

int run_coin(const GlobalFlags& flags, const std::string& protocol_spec, int n,
             const std::string& rho_list) {
  const ProtocolTree tree = parse_protocol_spec(protocol_spec, n);
  const CoinScanReport report = coin_scan(tree, parse_real_list(rho_list));
  if (flags.json()) {
    nlohmann::json rows = nlohmann::json::array();
    for (const CoinRow& row : report.rows)
      rows.push_back({{"rho", row.rho},
                      {"delta", row.delta},
                      {"bound", row.bound},
                      {"ratio", row.ratio},
                      {"verdict", report.has_bound
                                      ? (row.pass ? "PASS" : "FAIL")
                                      : "SKIP"}});
    return finish(dump_json({{"n", report.n},
                             {"d", report.cost},
                             {"t", report.restriction_max},
                             {"has_bound", report.has_bound},
                             {"rows", rows}}),
                  flags.out_path);
  }
  return finish(report.to_csv(), flags.out_path);
}

int run_gap_hamming(const GlobalFlags& flags, const std::string& protocol_spec,
                    int n, double c) {
  const ProtocolTree tree = parse_protocol_spec(protocol_spec, n);
  const GapHammingReport report = gap_hamming_demo(tree, c);
  if (flags.json()) {
    return finish(
        dump_json({{"n", report.n},
                   {"c", report.c},
                   {"rho", report.rho},
                   {"threshold", report.threshold},
                   {"mean_plus", report.mean_plus},
                   {"mean_minus", report.mean_minus},
                   {"advantage", report.advantage},
                   {"promise_mass_plus", report.promise_mass_plus},
                   {"promise_mass_minus", report.promise_mass_minus},
                   {"promise_mean_plus", report.promise_mean_plus},
                   {"promise_mean_minus", report.promise_mean_minus},
                   {"promise_advantage", report.promise_advantage},
                   {"slack_plus", report.slack_plus},
                   {"slack_minus", report.slack_minus},
                   {"hoeffding_exact", report.hoeffding_exact},
                   {"hoeffding_bound", report.hoeffding_bound},
                   {"verdict", report.hoeffding_pass ? "PASS" : "FAIL"}}),
        flags.out_path);
  }
  return finish(report.to_csv(), flags.out_path);
}

int run_corpus(const GlobalFlags& flags, int count, int n, int d) {
  const std::vector<ProtocolTree> corpus =
      generate_corpus(count, n, d, flags.seed);
  return finish(corpus_to_json_lines(corpus), flags.out_path);
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{
      "fiberlab: a desk-scale laboratory for XOR/gadget fibers of two-party "
      "protocols, their level-k Fourier growth, clean-protocol simulations, "
      "and concentration-bound verification"};
  app.fallthrough();
  app.require_subcommand(0, 1);

  GlobalFlags flags;
  app.add_option("--seed", flags.seed, "Base seed for all randomized work")
      ->envname("FIBERLAB_SEED");
  app.add_option("--out", flags.out_path,
                 "Write the report to this path instead of stdout");
  app.add_option("--format", flags.format, "Report format")
      ->check(CLI::IsMember({"csv", "json"}))
      ->default_str("csv");

  // fiber ---------------------------------------------------------------
  auto* fiber_cmd = app.add_subcommand(
      "fiber", "Exact XOR-fiber of a protocol and its level-k weight");
  std::string fiber_protocol;
  int fiber_n = 0, fiber_k = 1;
  bool fiber_table = false;
  fiber_cmd->add_option("--protocol", fiber_protocol,
                        "maj:D | const:V | x1y1 | parity:DEPTH:SEED | "
                        "random:D:SEED | file:PATH")
      ->required();
  fiber_cmd->add_option("--n", fiber_n, "Coordinates per side")->required();
  fiber_cmd->add_option("--k", fiber_k, "Fourier level (default 1)");
  fiber_cmd->add_flag("--table", fiber_table, "Also print the fiber table");

  // growth ----------------------------------------------------------------
  auto* growth_cmd = app.add_subcommand(
      "growth", "Level-1/2 weight report over a protocol corpus");
  std::string growth_corpus, growth_maj;
  int growth_random = 0, growth_n = 6, growth_d = 4;
  growth_cmd->add_option("--corpus", growth_corpus,
                         "JSON-lines corpus file to read");
  growth_cmd->add_option("--maj", growth_maj,
                         "Comma list of majority block counts (n = d each)");
  growth_cmd->add_option("--random-count", growth_random,
                         "Generate this many seeded random protocols");
  growth_cmd->add_option("--n", growth_n, "Coordinates for --random-count");
  growth_cmd->add_option("--d", growth_d, "Cost for --random-count");

  // gadget ----------------------------------------------------------------
  auto* gadget_cmd = app.add_subcommand(
      "gadget", "Two-party gadget spectrum and balance summary");
  std::string gadget_name;
  int gadget_embed = 0;
  bool gadget_spectrum = false;
  gadget_cmd->add_option("--name", gadget_name, "xor | and | ip2")->required();
  gadget_cmd->add_option("--embed", gadget_embed,
                         "Apply the balancing embedding this many times");
  gadget_cmd->add_flag("--spectrum", gadget_spectrum,
                       "Also print every coefficient");

  // clean-sim ---------------------------------------------------------------
  auto* clean_cmd = app.add_subcommand(
      "clean-sim", "Clean-protocol simulation runs with invariant verdicts");
  std::string clean_protocol;
  int clean_n = 0, clean_level = 1, clean_bits = 8, clean_runs = 1;
  int clean_population = 20000, clean_population_min = 500;
  double clean_lambda = 100.0, clean_box = 4.0;
  bool clean_trace = false;
  clean_cmd->add_option("--protocol", clean_protocol, "Protocol spec string")
      ->required();
  clean_cmd->add_option("--n", clean_n, "Coordinates per side")->required();
  clean_cmd->add_option("--level", clean_level, "1 or 2")
      ->check(CLI::IsMember({1, 2}));
  clean_cmd->add_option("--lambda", clean_lambda, "Cleanness threshold");
  clean_cmd->add_option("--bits", clean_bits, "Bin resolution L");
  clean_cmd->add_option("--box", clean_box, "Truncation half-width T");
  clean_cmd->add_option("--population", clean_population, "Population size N");
  clean_cmd->add_option("--population-min", clean_population_min,
                        "Underflow threshold N_min");
  clean_cmd->add_option("--runs", clean_runs, "Number of seeded runs");
  clean_cmd->add_flag("--trace", clean_trace,
                      "Emit one JSON-lines trace (requires --runs 1)");

  // concentration -----------------------------------------------------------
  auto* conc_cmd = app.add_subcommand(
      "concentration", "Tail, level-k, tightness, and diagnostic checks");
  conc_cmd->require_subcommand(1);

  auto* chi2_cmd = conc_cmd->add_subcommand("chi2", "Chi-squared tail check");
  int chi2_m = 4;
  std::uint64_t chi2_samples = 1000000;
  std::string chi2_grid;
  chi2_cmd->add_option("--m", chi2_m, "Degrees of freedom")->required();
  chi2_cmd->add_option("--n-samples", chi2_samples, "Monte Carlo samples");
  chi2_cmd->add_option("--r", chi2_grid,
                       "Comma list of thresholds (default 2m,4m,8m)");

  auto* hw_cmd = conc_cmd->add_subcommand(
      "hw", "Quadratic-form tail check on a seeded orthonormal set");
  int hw_m = 3, hw_dim = 8;
  std::uint64_t hw_samples = 1000000;
  double hw_kappa = kQuadraticTailKappa;
  std::string hw_grid;
  hw_cmd->add_option("--m", hw_m, "Number of forms");
  hw_cmd->add_option("--dim", hw_dim, "Ambient dimension");
  hw_cmd->add_option("--n-samples", hw_samples, "Monte Carlo samples");
  hw_cmd->add_option("--kappa", hw_kappa, "Bound constant");
  hw_cmd->add_option("--r", hw_grid,
                     "Comma list of thresholds (default 98m,196m)");

  auto* levelk_cmd = conc_cmd->add_subcommand(
      "levelk", "Level-k inequality over the builtin box/halfspace family");
  int levelk_k = 1, levelk_dim = 3;
  std::uint64_t levelk_samples = 400000;
  levelk_cmd->add_option("--k", levelk_k, "Level (1 or 2)");
  levelk_cmd->add_option("--dim", levelk_dim, "Ambient dimension");
  levelk_cmd->add_option("--n-samples", levelk_samples, "Monte Carlo samples");

  auto* tight_cmd = conc_cmd->add_subcommand(
      "tightness", "Conditional second-moment scaling of the form statistic");
  std::string tight_d = "4,16,36,64";
  std::uint64_t tight_samples = 100000;
  double tight_c = 1.0;
  tight_cmd->add_option("--d", tight_d, "Comma list of d values");
  tight_cmd->add_option("--n-samples", tight_samples, "Samples per point");
  tight_cmd->add_option("--c", tight_c, "Conditioning constant");

  auto* iso_cmd = conc_cmd->add_subcommand(
      "iso", "Isoperimetric quantity means against their ceilings");
  int iso_m = 1, iso_dim = 3;
  std::uint64_t iso_samples = 20000;
  iso_cmd->add_option("--m", iso_m, "Number of forms");
  iso_cmd->add_option("--dim", iso_dim, "Ambient dimension");
  iso_cmd->add_option("--n-samples", iso_samples, "Monte Carlo samples");

  // coin ----------------------------------------------------------------
  auto* coin_cmd = app.add_subcommand(
      "coin", "Exact coin-problem scan with the restriction-maximum bound");
  std::string coin_protocol, coin_rho = "0.1,-0.1,0.3,-0.3,0.5,-0.5";
  int coin_n = 0;
  coin_cmd->add_option("--protocol", coin_protocol, "Protocol spec string")
      ->required();
  coin_cmd->add_option("--n", coin_n, "Coordinates per side")->required();
  coin_cmd->add_option("--rho", coin_rho, "Comma list of biases");

  // gap-hamming --------------------------------------------------------
  auto* gap_cmd = app.add_subcommand(
      "gap-hamming", "Exact gap-Hamming advantage demo");
  std::string gap_protocol;
  int gap_n = 0;
  double gap_c = 1.0;
  gap_cmd->add_option("--protocol", gap_protocol, "Protocol spec string")
      ->required();
  gap_cmd->add_option("--n", gap_n, "Coordinates per side")->required();
  gap_cmd->add_option("--c", gap_c, "Bias scale: rho = c / sqrt(n)");

  // corpus ----------------------------------------------------------------
  auto* corpus_cmd = app.add_subcommand(
      "corpus", "Generate a seeded JSON-lines protocol corpus");
  int corpus_count = 10, corpus_n = 6, corpus_d = 4;
  corpus_cmd->add_option("--count", corpus_count, "Number of protocols");
  corpus_cmd->add_option("--n", corpus_n, "Coordinates per side");
  corpus_cmd->add_option("--d", corpus_d, "Communication cost");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the error and usage hint
    return 2;
  }

  try {
    if (*fiber_cmd)
      return run_fiber(flags, fiber_protocol, fiber_n, fiber_k, fiber_table);
    if (*growth_cmd)
      return run_growth(flags, growth_corpus, growth_maj, growth_random,
                        growth_n, growth_d);
    if (*gadget_cmd)
      return run_gadget(flags, gadget_name, gadget_embed, gadget_spectrum);
    if (*clean_cmd)
      return run_clean_sim(flags, clean_protocol, clean_n, clean_level,
                           clean_lambda, clean_bits, clean_box,
                           clean_population, clean_population_min, clean_runs,
                           clean_trace);
    if (*conc_cmd) {
      if (*chi2_cmd) {
        std::vector<double> grid =
            chi2_grid.empty()
                ? std::vector<double>{2.0 * chi2_m, 4.0 * chi2_m, 8.0 * chi2_m}
                : parse_real_list(chi2_grid);
        const TailReport report =
            chi2_tail_check(chi2_m, grid, chi2_samples, flags.seed);
        return finish(flags.json() ? dump_json(tail_report_json(report))
                                   : report.to_csv(),
                      flags.out_path);
      }
      if (*hw_cmd) {
        std::vector<double> grid =
            hw_grid.empty()
                ? std::vector<double>{98.0 * hw_m, 196.0 * hw_m}
                : parse_real_list(hw_grid);
        const QuadraticFormSet forms =
            seeded_form_set(hw_m, hw_dim, flags.seed);
        const TailReport report =
            hanson_wright_check(forms, grid, hw_samples, hw_kappa, flags.seed);
        return finish(flags.json() ? dump_json(tail_report_json(report))
                                   : report.to_csv(),
                      flags.out_path);
      }
      if (*levelk_cmd) {
        const LevelKReport report = level_k_inequality_check(
            builtin_level_k_family(levelk_dim), levelk_k, levelk_samples,
            flags.seed);
        if (flags.json()) {
          nlohmann::json rows = nlohmann::json::array();
          for (const LevelKRow& row : report.rows) {
            nlohmann::json r{{"set", row.name},        {"mu", row.mu},
                             {"lhs", row.lhs},         {"bound", row.bound},
                             {"ratio", row.ratio},     {"mc_error", row.mc_error},
                             {"verdict", row.pass ? "PASS" : "FAIL"}};
            if (row.has_exact) r["exact_ratio"] = row.ratio_exact;
            rows.push_back(r);
          }
          return finish(dump_json({{"k", report.k},
                                   {"samples", report.samples},
                                   {"worst_ratio", report.worst_ratio},
                                   {"rows", rows}}),
                        flags.out_path);
        }
        return finish(report.to_csv(), flags.out_path);
      }
      if (*tight_cmd) {
        const TightnessReport report = hw_tightness_demo(
            parse_int_list(tight_d), tight_samples, tight_c, flags.seed);
        if (flags.json()) {
          nlohmann::json points = nlohmann::json::array();
          for (const TightnessPoint& p : report.points)
            points.push_back({{"d", p.d},
                              {"estimate", p.estimate},
                              {"std_error", p.std_error},
                              {"exact", p.exact}});
          return finish(
              dump_json({{"c", report.c},
                         {"samples_per_point", report.samples_per_point},
                         {"points", points},
                         {"fitted_exponent", report.fitted_exponent},
                         {"fitted_exponent_exact",
                          report.fitted_exponent_exact}}),
              flags.out_path);
        }
        std::string out = report.to_csv();
        out += "quantity,value\n";
        out += join_csv({"fitted_exponent",
                         format_double(report.fitted_exponent)});
        out += '\n';
        out += join_csv({"fitted_exponent_exact",
                         format_double(report.fitted_exponent_exact)});
        out += '\n';
        return finish(out, flags.out_path);
      }
      if (*iso_cmd) {
        const QuadraticFormSet forms =
            seeded_form_set(iso_m, iso_dim, flags.seed);
        const IsoperimetricDiagnostic diag =
            isoperimetric_diagnostic(forms, iso_samples, flags.seed);
        if (flags.json()) {
          return finish(
              dump_json({{"n", diag.n},
                         {"m", diag.m},
                         {"samples", diag.samples},
                         {"mean_f", diag.mean_f},
                         {"mean_g", diag.mean_g},
                         {"mean_h", diag.mean_h},
                         {"v", diag.v},
                         {"bound_f", diag.bound_f},
                         {"bound_gh", diag.bound_gh},
                         {"verdict", diag.pass ? "PASS" : "FAIL"}}),
              flags.out_path);
        }
        return finish(diag.to_csv(), flags.out_path);
      }
    }
    if (*coin_cmd) return run_coin(flags, coin_protocol, coin_n, coin_rho);
    if (*gap_cmd) return run_gap_hamming(flags, gap_protocol, gap_n, gap_c);
    if (*corpus_cmd)
      return run_corpus(flags, corpus_count, corpus_n, corpus_d);
  } catch (const std::invalid_argument& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::domain_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }

  // No subcommand given: print usage and signal a usage error.
  fmt::print("{}", app.help());
  return 2;
}

}  // namespace fiberlab
