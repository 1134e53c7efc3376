#include "fiberlab/fiber.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "fiberlab/rng.hpp"

namespace fiberlab {

namespace {

constexpr int kMaxXorFiberDim = 14;
constexpr int kMaxGFiberBits = 24;
constexpr int kMaxLiftedBits = 16;

// Lean tree walker for hot loops; assumes a validated tree.
inline double walk(const ProtocolTree& tree, std::uint64_t x, std::uint64_t y) {
  int idx = tree.root;
  for (;;) {
    const ProtoNode& node = tree.nodes[static_cast<std::size_t>(idx)];
    if (node.is_leaf) return node.value;
    const std::uint64_t own = node.owner == Party::kAlice ? x : y;
    idx = node.message.test(own) ? node.one_child : node.zero_child;
  }
}

void butterfly(std::vector<double>& a) {
  const std::size_t size = a.size();
  for (std::size_t half = 1; half < size; half <<= 1)
    for (std::size_t block = 0; block < size; block += 2 * half)
      for (std::size_t i = block; i < block + half; ++i) {
        const double lo = a[i];
        const double hi = a[i + half];
        a[i] = lo + hi;
        a[i + half] = lo - hi;
      }
}

}  // namespace

BooleanFn xor_fiber(const ProtocolTree& tree) {
  tree.validate();
  if (tree.alice_bits != tree.bob_bits)
    throw std::invalid_argument("xor_fiber: tree must be over {±1}^n x {±1}^n");
  const int n = tree.alice_bits;
  if (n > kMaxXorFiberDim)
    throw std::invalid_argument("xor_fiber: n exceeds enumeration cap 14");
  const std::size_t domain = std::size_t{1} << n;
  BooleanFn h;
  h.n = n;
  h.values.assign(domain, 0.0);
  const double scale = std::ldexp(1.0, -n);
  // Entries for distinct z are independent; shard over z. The per-z sum is
  // accumulated in a fixed order inside its shard, so results do not depend
  // on the shard count or thread scheduling.
  const int shards = domain >= 1024 ? kMonteCarloShards : 1;
  parallel_shards(shards, [&](int shard) {
    for (std::size_t z = static_cast<std::size_t>(shard); z < domain;
         z += static_cast<std::size_t>(shards)) {
      double total = 0.0;
      for (std::size_t x = 0; x < domain; ++x) total += walk(tree, x, x ^ z);
      h.values[z] = total * scale;
    }
  });
  return h;
}

BooleanFn xor_fiber(const RandomizedProtocol& randomized) {
  randomized.validate();
  if (randomized.components.empty())
    throw std::invalid_argument("xor_fiber: empty mixture");
  const int n = randomized.components.front().second.alice_bits;
  BooleanFn h = BooleanFn::constant(n, 0.0);
  for (const auto& [p, tree] : randomized.components) {
    if (tree.alice_bits != n || tree.bob_bits != n)
      throw std::invalid_argument("xor_fiber: mixture components disagree on n");
    const BooleanFn component = xor_fiber(tree);
    for (std::size_t z = 0; z < h.values.size(); ++z)
      h.values[z] += p * component.values[z];
  }
  return h;
}

BooleanFn xor_fiber_via_rectangles(const ProtocolTree& tree) {
  tree.validate();
  if (tree.alice_bits != tree.bob_bits)
    throw std::invalid_argument(
        "xor_fiber_via_rectangles: tree must be over {±1}^n x {±1}^n");
  const int n = tree.alice_bits;
  if (n > kMaxXorFiberDim)
    throw std::invalid_argument("xor_fiber_via_rectangles: n exceeds cap 14");
  const std::size_t domain = std::size_t{1} << n;
  BooleanFn h;
  h.n = n;
  h.values.assign(domain, 0.0);
  const double scale = std::ldexp(1.0, -2 * n);  // one 2^{-n} per transform pair
  for (const auto& [rect, value] : leaf_rectangles(tree)) {
    std::vector<double> a(domain, 0.0), b(domain, 0.0);
    for (std::size_t i = 0; i < domain; ++i) {
      if (rect.alice_set.test(i)) a[i] = 1.0;
      if (rect.bob_set.test(i)) b[i] = 1.0;
    }
    // #{x : x in X_leaf, x XOR z in Y_leaf} as an XOR-convolution: transform
    // both indicators, multiply pointwise, transform back.
    butterfly(a);
    butterfly(b);
    for (std::size_t s = 0; s < domain; ++s) a[s] *= b[s];
    butterfly(a);
    for (std::size_t z = 0; z < domain; ++z)
      h.values[z] += value * a[z] * scale;
  }
  return h;
}

BooleanFn g_fiber(const LiftedProtocol& lifted, const Gadget& g) {
  lifted.validate();
  g.validate();
  if (g.m1 != lifted.m1 || g.m2 != lifted.m2)
    throw std::invalid_argument("g_fiber: gadget widths mismatch");
  const int n = lifted.n;
  const int pair_bits = n * (g.m1 + g.m2);
  if (pair_bits > kMaxGFiberBits)
    throw std::invalid_argument("g_fiber: n(m1+m2) exceeds enumeration cap 24");

  const std::size_t alice_domain = std::size_t{1} << (n * g.m1);
  const std::size_t bob_domain = std::size_t{1} << (n * g.m2);
  const std::uint32_t block1_mask = (1u << g.m1) - 1u;
  const std::uint32_t block2_mask = (1u << g.m2) - 1u;

  const std::size_t z_count = std::size_t{1} << n;
  std::vector<double> sums(z_count, 0.0);
  std::vector<std::uint64_t> counts(z_count, 0);

  for (std::size_t x = 0; x < alice_domain; ++x) {
    for (std::size_t y = 0; y < bob_domain; ++y) {
      std::uint32_t z = 0;
      for (int i = 0; i < n; ++i) {
        const std::uint32_t xi =
            static_cast<std::uint32_t>(x >> (i * g.m1)) & block1_mask;
        const std::uint32_t yi =
            static_cast<std::uint32_t>(y >> (i * g.m2)) & block2_mask;
        if (g(xi, yi) == -1) z |= 1u << i;
      }
      sums[z] += walk(lifted.tree, x, y);
      ++counts[z];
    }
  }

  BooleanFn h;
  h.n = n;
  h.values.resize(z_count);
  for (std::size_t z = 0; z < z_count; ++z) {
    if (counts[z] == 0)
      throw std::domain_error("g_fiber: empty conditional set at z index " +
                              std::to_string(z));
    h.values[z] = sums[z] / static_cast<double>(counts[z]);
  }
  return h;
}

BooleanFn g_fiber(const RandomizedProtocol& randomized, int n, const Gadget& g) {
  randomized.validate();
  if (randomized.components.empty())
    throw std::invalid_argument("g_fiber: empty mixture");
  BooleanFn h = BooleanFn::constant(n, 0.0);
  for (const auto& [p, tree] : randomized.components) {
    LiftedProtocol lifted;
    lifted.tree = tree;
    lifted.n = n;
    lifted.m1 = g.m1;
    lifted.m2 = g.m2;
    const BooleanFn component = g_fiber(lifted, g);
    for (std::size_t z = 0; z < h.values.size(); ++z)
      h.values[z] += p * component.values[z];
  }
  return h;
}

LiftedSpectrum lifted_fourier(const LiftedProtocol& lifted) {
  lifted.validate();
  const int total_bits = lifted.n * (lifted.m1 + lifted.m2);
  if (total_bits > kMaxLiftedBits)
    throw std::invalid_argument("lifted_fourier: n(m1+m2) exceeds cap 16");
  const std::size_t alice_domain = std::size_t{1} << (lifted.n * lifted.m1);
  const std::size_t bob_domain = std::size_t{1} << (lifted.n * lifted.m2);
  LiftedSpectrum spec;
  spec.n = lifted.n;
  spec.m1 = lifted.m1;
  spec.m2 = lifted.m2;
  spec.coeffs.resize(std::size_t{1} << total_bits);
  for (std::size_t y = 0; y < bob_domain; ++y)
    for (std::size_t x = 0; x < alice_domain; ++x)
      spec.coeffs[x | (y << (lifted.n * lifted.m1))] = walk(lifted.tree, x, y);
  butterfly(spec.coeffs);
  const double scale = std::ldexp(1.0, -total_bits);
  for (double& c : spec.coeffs) c *= scale;
  return spec;
}

double verify_fact_g_fiber_fourier(const LiftedProtocol& lifted,
                                   const Gadget& g) {
  if (!check_balanced(g))
    throw std::invalid_argument("verify_fact_g_fiber_fourier: gadget must be balanced");
  const FourierSpectrum fiber_spec = walsh_hadamard(g_fiber(lifted, g));
  const LiftedSpectrum big = lifted_fourier(lifted);
  const GadgetSpectrum gspec = gadget_fourier(g);
  const int n = lifted.n;

  const std::uint32_t s_count = 1u << g.m1;
  const std::uint32_t t_count = 1u << g.m2;
  // Nonempty (S, T) pairs per block, flattened for the odometer below.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::uint32_t S = 1; S < s_count; ++S)
    for (std::uint32_t T = 1; T < t_count; ++T) pairs.emplace_back(S, T);

  double max_err = 0.0;
  for (std::uint32_t I = 0; I < (1u << n); ++I) {
    std::vector<int> blocks;
    for (int i = 0; i < n; ++i)
      if ((I >> i) & 1u) blocks.push_back(i);
    // Sum over one nonempty (S_i, T_i) choice per block in I.
    double rhs = 0.0;
    std::vector<std::size_t> odo(blocks.size(), 0);
    for (;;) {
      double term = 1.0;
      std::uint64_t alice_masks = 0, bob_masks = 0;
      for (std::size_t b = 0; b < blocks.size(); ++b) {
        const auto& [S, T] = pairs[odo[b]];
        term *= gspec.coeff(S, T);
        alice_masks |= static_cast<std::uint64_t>(S) << (blocks[b] * g.m1);
        bob_masks |= static_cast<std::uint64_t>(T) << (blocks[b] * g.m2);
      }
      rhs += term * big.coeff(alice_masks, bob_masks);
      // Advance the odometer; empty I contributes the single term C^(0,0).
      std::size_t pos = 0;
      while (pos < odo.size() && ++odo[pos] == pairs.size()) odo[pos++] = 0;
      if (pos == odo.size()) break;
    }
    max_err = std::max(max_err, std::abs(fiber_spec.coeff(I) - rhs));
  }
  return max_err;
}

}  // namespace fiberlab
