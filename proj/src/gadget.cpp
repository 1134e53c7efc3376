#include "fiberlab/gadget.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>

namespace fiberlab {

namespace {

constexpr int kMaxGadgetBits = 20;

std::vector<double> butterfly_copy(std::vector<double> a) {
  const std::size_t size = a.size();
  for (std::size_t half = 1; half < size; half <<= 1)
    for (std::size_t block = 0; block < size; block += 2 * half)
      for (std::size_t i = block; i < block + half; ++i) {
        const double lo = a[i];
        const double hi = a[i + half];
        a[i] = lo + hi;
        a[i + half] = lo - hi;
      }
  return a;
}

}  // namespace

void Gadget::validate() const {
  if (m1 < 1 || m2 < 1 || m1 + m2 > kMaxGadgetBits)
    throw std::invalid_argument("gadget: widths out of range");
  if (values.size() != table_size())
    throw std::invalid_argument("gadget: table length != 2^{m1+m2}");
  for (std::int8_t v : values)
    if (v != 1 && v != -1)
      throw std::invalid_argument("gadget: entries must be ±1");
}

GadgetSpectrum gadget_fourier(const Gadget& g) {
  g.validate();
  std::vector<double> table(g.table_size());
  for (std::size_t i = 0; i < table.size(); ++i) table[i] = g.values[i];
  GadgetSpectrum spec;
  spec.m1 = g.m1;
  spec.m2 = g.m2;
  spec.coeffs = butterfly_copy(std::move(table));
  // The butterfly over the joint (x, y) index computes, at packed index
  // S | (T << m1), exactly sum_{x,y} g(x,y) x_S y_T; normalize to expectations.
  const double scale = std::ldexp(1.0, -(g.m1 + g.m2));
  for (double& c : spec.coeffs) c *= scale;
  return spec;
}

bool check_balanced(const Gadget& g) {
  const GadgetSpectrum spec = gadget_fourier(g);
  const std::uint32_t s_count = 1u << g.m1;
  const std::uint32_t t_count = 1u << g.m2;
  for (std::uint32_t S = 0; S < s_count; ++S)
    if (std::abs(spec.coeff(S, 0)) > 1e-12) return false;
  for (std::uint32_t T = 0; T < t_count; ++T)
    if (std::abs(spec.coeff(0, T)) > 1e-12) return false;
  return true;
}

Gadget balance_embed(const Gadget& g) {
  g.validate();
  Gadget out;
  out.m1 = g.m1 + 1;
  out.m2 = g.m2 + 1;
  out.values.resize(out.table_size());
  const std::uint32_t x_mask = (1u << g.m1) - 1u;
  const std::uint32_t y_mask = (1u << g.m2) - 1u;
  for (std::uint32_t x = 0; x < (1u << out.m1); ++x)
    for (std::uint32_t y = 0; y < (1u << out.m2); ++y) {
      const int fresh_sign =
          (((x >> g.m1) & 1u) ^ ((y >> g.m2) & 1u)) ? -1 : 1;
      out.values[x | (y << out.m1)] = static_cast<std::int8_t>(
          fresh_sign * g(x & x_mask, y & y_mask));
    }
  return out;
}

Gadget builtin_gadget(const std::string& name) {
  if (name == "xor") {
    Gadget g;
    g.m1 = g.m2 = 1;
    g.values = {1, -1, -1, 1};  // g(x,y) = xy
    return g;
  }
  if (name == "and" || name == "and±" || name == "andpm") {
    // 2*1[x = y = +1] - 1: +1 only on the all-plus input (index 0).
    Gadget g;
    g.m1 = g.m2 = 1;
    g.values = {1, -1, -1, -1};
    return g;
  }
  if (name == "ip2") {
    // Two-bit inner product: parity of the coordinatewise ANDs. With the bit
    // encoding a_i = 1[x_i = -1], the value is (-1)^{a_1 b_1 + a_2 b_2}.
    Gadget g;
    g.m1 = g.m2 = 2;
    g.values.resize(16);
    for (std::uint32_t x = 0; x < 4; ++x)
      for (std::uint32_t y = 0; y < 4; ++y) {
        const int parity = std::popcount(x & y) & 1;
        g.values[x | (y << 2)] = static_cast<std::int8_t>(parity ? -1 : 1);
      }
    return g;
  }
  throw std::invalid_argument("builtin_gadget: unknown name '" + name + "'");
}

std::pair<std::uint32_t, std::uint32_t> argmax_gadget_coeff(
    const GadgetSpectrum& spec) {
  const std::uint32_t s_count = 1u << spec.m1;
  const std::uint32_t t_count = 1u << spec.m2;
  double best = -1.0;
  std::pair<std::uint32_t, std::uint32_t> best_pair{0, 0};
  for (std::uint32_t T = 1; T < t_count; ++T)
    for (std::uint32_t S = 1; S < s_count; ++S) {
      const double mag = std::abs(spec.coeff(S, T));
      if (mag > best + 1e-15) {
        best = mag;
        best_pair = {S, T};
      }
    }
  if (best < 0.0)
    throw std::invalid_argument("argmax_gadget_coeff: no nonempty pair exists");
  return best_pair;
}

void LiftedProtocol::validate() const {
  if (n < 1) throw std::invalid_argument("lifted protocol: n must be >= 1");
  if (m1 < 1 || m2 < 1)
    throw std::invalid_argument("lifted protocol: widths must be >= 1");
  if (tree.alice_bits != n * m1 || tree.bob_bits != n * m2)
    throw std::invalid_argument(
        "lifted protocol: tree domains do not match n*m1 / n*m2");
  tree.validate();
}

namespace {

// Re-indexes every message table of `tree` through `map`, where map[v] gives
// the original-domain input corresponding to new-domain input v for the given
// party. Children/leaves are unchanged.
ProtocolTree reindex_tables(const ProtocolTree& tree, int new_alice_bits,
                            int new_bob_bits,
                            const std::vector<std::uint32_t>& alice_map,
                            const std::vector<std::uint32_t>& bob_map) {
  ProtocolTree out;
  out.alice_bits = new_alice_bits;
  out.bob_bits = new_bob_bits;
  out.root = tree.root;
  out.nodes.reserve(tree.nodes.size());
  for (const ProtoNode& node : tree.nodes) {
    if (node.is_leaf) {
      out.nodes.push_back(node);
      continue;
    }
    const auto& map = node.owner == Party::kAlice ? alice_map : bob_map;
    ProtoNode copy;
    copy.is_leaf = false;
    copy.owner = node.owner;
    copy.zero_child = node.zero_child;
    copy.one_child = node.one_child;
    copy.message = DynBitset(map.size());
    for (std::size_t v = 0; v < map.size(); ++v)
      if (node.message.test(map[v])) copy.message.set(v);
    out.nodes.push_back(std::move(copy));
  }
  return out;
}

int parity_of(std::uint32_t x, std::uint32_t mask) {
  return std::popcount(x & mask) & 1;
}

}  // namespace

LiftedProtocol xor_to_g_protocol(const ProtocolTree& tree, const Gadget& g,
                                 std::uint32_t S, std::uint32_t T) {
  g.validate();
  tree.validate();
  if (S == 0 || T == 0)
    throw std::invalid_argument("xor_to_g_protocol: S and T must be nonempty");
  if (S >= (1u << g.m1) || T >= (1u << g.m2))
    throw std::invalid_argument("xor_to_g_protocol: mask exceeds gadget width");
  if (tree.alice_bits != tree.bob_bits)
    throw std::invalid_argument("xor_to_g_protocol: tree must be over {±1}^n x {±1}^n");
  const int n = tree.alice_bits;
  if (n * g.m1 > kMaxGadgetBits || n * g.m2 > kMaxGadgetBits)
    throw std::invalid_argument("xor_to_g_protocol: lifted domain too large");

  // New Alice input X (n*m1 bits) compresses to x with x_i = X_{i,S}.
  auto build_map = [n](int m, std::uint32_t mask) {
    const std::size_t domain = std::size_t{1} << (n * m);
    std::vector<std::uint32_t> map(domain);
    for (std::uint32_t big = 0; big < domain; ++big) {
      std::uint32_t small = 0;
      for (int i = 0; i < n; ++i) {
        const std::uint32_t block = (big >> (i * m)) & ((1u << m) - 1u);
        if (parity_of(block, mask)) small |= 1u << i;
      }
      map[big] = small;
    }
    return map;
  };

  LiftedProtocol lifted;
  lifted.n = n;
  lifted.m1 = g.m1;
  lifted.m2 = g.m2;
  lifted.tree = reindex_tables(tree, n * g.m1, n * g.m2,
                               build_map(g.m1, S), build_map(g.m2, T));
  lifted.validate();
  return lifted;
}

RandomizedProtocol g_to_xor_protocol(const LiftedProtocol& lifted,
                                     const Gadget& g,
                                     const BlockAssignment& assignment) {
  lifted.validate();
  g.validate();
  if (g.m1 != lifted.m1 || g.m2 != lifted.m2)
    throw std::invalid_argument("g_to_xor_protocol: gadget widths mismatch");
  const int n = lifted.n;
  if (static_cast<int>(assignment.alice_masks.size()) != n ||
      static_cast<int>(assignment.bob_masks.size()) != n)
    throw std::invalid_argument("g_to_xor_protocol: need one mask per block");
  for (std::uint32_t S : assignment.alice_masks)
    if (S == 0 || S >= (1u << g.m1))
      throw std::invalid_argument("g_to_xor_protocol: invalid Alice block mask");
  for (std::uint32_t T : assignment.bob_masks)
    if (T == 0 || T >= (1u << g.m2))
      throw std::invalid_argument("g_to_xor_protocol: invalid Bob block mask");

  // Per block, a uniform completion of bit b is w(b) ⊙ r with r uniform on the
  // subgroup {u : u_S = +1} and w(b) a fixed coset representative. Enumerate
  // per-party randomness r as a product over blocks.
  const int alice_free_bits = n * (g.m1 - 1);
  const int bob_free_bits = n * (g.m2 - 1);
  if (alice_free_bits + bob_free_bits > 16)
    throw std::invalid_argument("g_to_xor_protocol: completion mixture too large");

  // Subgroup {u in {0,1}^m : parity(u & mask) = 0} enumerated by free strings.
  auto subgroup_of = [](int m, std::uint32_t mask) {
    std::vector<std::uint32_t> members;
    for (std::uint32_t u = 0; u < (1u << m); ++u)
      if (parity_of(u, mask) == 0) members.push_back(u);
    return members;  // size 2^{m-1}
  };
  auto representative = [](std::uint32_t mask) {
    // Flips exactly one coordinate of the mask, so parity(w & mask) = 1.
    return mask & (~mask + 1u);  // lowest set bit
  };

  std::vector<std::vector<std::uint32_t>> alice_groups, bob_groups;
  std::vector<std::uint32_t> alice_reps, bob_reps;
  for (int i = 0; i < n; ++i) {
    alice_groups.push_back(subgroup_of(g.m1, assignment.alice_masks[i]));
    bob_groups.push_back(subgroup_of(g.m2, assignment.bob_masks[i]));
    alice_reps.push_back(representative(assignment.alice_masks[i]));
    bob_reps.push_back(representative(assignment.bob_masks[i]));
  }

  const std::size_t alice_choices = std::size_t{1} << alice_free_bits;
  const std::size_t bob_choices = std::size_t{1} << bob_free_bits;
  const double weight =
      1.0 / (static_cast<double>(alice_choices) * static_cast<double>(bob_choices));

  // For one fixed randomness index, the lifting map small-domain -> big-domain:
  // block i of the big input is (b_i ? w_i : 0) XOR r_i (XOR of bit encodings
  // realizes the coordinatewise product of sign vectors).
  auto lift_map = [n](int m, const std::vector<std::vector<std::uint32_t>>& groups,
                      const std::vector<std::uint32_t>& reps, std::size_t rand_idx) {
    std::vector<std::uint32_t> blocks(static_cast<std::size_t>(n));
    const std::size_t group_size = groups[0].size();
    std::size_t rest = rand_idx;
    for (int i = 0; i < n; ++i) {
      blocks[static_cast<std::size_t>(i)] =
          groups[static_cast<std::size_t>(i)][rest % group_size];
      rest /= group_size;
    }
    const std::size_t domain = std::size_t{1} << n;
    std::vector<std::uint32_t> map(domain);
    for (std::uint32_t small = 0; small < domain; ++small) {
      std::uint32_t big = 0;
      for (int i = 0; i < n; ++i) {
        std::uint32_t block = blocks[static_cast<std::size_t>(i)];
        if ((small >> i) & 1u) block ^= reps[static_cast<std::size_t>(i)];
        big |= block << (i * m);
      }
      map[small] = big;
    }
    return map;
  };

  RandomizedProtocol mixture;
  mixture.components.reserve(alice_choices * bob_choices);
  for (std::size_t ra = 0; ra < alice_choices; ++ra) {
    const auto alice_map = lift_map(g.m1, alice_groups, alice_reps, ra);
    for (std::size_t rb = 0; rb < bob_choices; ++rb) {
      const auto bob_map = lift_map(g.m2, bob_groups, bob_reps, rb);
      mixture.components.emplace_back(
          weight, reindex_tables(lifted.tree, n, n, alice_map, bob_map));
    }
  }
  mixture.validate();
  return mixture;
}

nlohmann::json gadget_to_json(const Gadget& g) {
  g.validate();
  static const char* digits = "0123456789abcdef";
  const std::size_t bytes = (g.table_size() + 7) / 8;
  std::string hex;
  hex.reserve(bytes * 2);
  for (std::size_t j = 0; j < bytes; ++j) {
    unsigned byte = 0;
    for (std::size_t k = 0; k < 8; ++k) {
      const std::size_t i = 8 * j + k;
      if (i < g.table_size() && g.values[i] == -1) byte |= 1u << k;
    }
    hex.push_back(digits[byte >> 4]);
    hex.push_back(digits[byte & 0xF]);
  }
  return nlohmann::json{{"m1", g.m1}, {"m2", g.m2}, {"values", hex}};
}

Gadget gadget_from_json(const nlohmann::json& j) {
  Gadget g;
  g.m1 = j.at("m1").get<int>();
  g.m2 = j.at("m2").get<int>();
  if (g.m1 < 1 || g.m2 < 1 || g.m1 + g.m2 > kMaxGadgetBits)
    throw std::invalid_argument("gadget JSON: widths out of range");
  const std::string hex = j.at("values").get<std::string>();
  const std::size_t size = g.table_size();
  const std::size_t bytes = (size + 7) / 8;
  if (hex.size() != bytes * 2)
    throw std::invalid_argument("gadget JSON: values hex length mismatch");
  auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
    throw std::invalid_argument("gadget JSON: bad hex digit");
  };
  g.values.assign(size, 1);
  for (std::size_t j2 = 0; j2 < bytes; ++j2) {
    const unsigned byte = (nibble(hex[2 * j2]) << 4) | nibble(hex[2 * j2 + 1]);
    for (std::size_t k = 0; k < 8; ++k) {
      const std::size_t i = 8 * j2 + k;
      if (i < size && ((byte >> k) & 1u)) g.values[i] = -1;
    }
  }
  g.validate();
  return g;
}

}  // namespace fiberlab
