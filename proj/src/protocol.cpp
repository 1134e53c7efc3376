#include "fiberlab/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "fiberlab/rng.hpp"

namespace fiberlab {

namespace {

constexpr int kMaxDomainBits = 24;

void check_domain_bits(int bits) {
  if (bits < 0 || bits > kMaxDomainBits)
    throw std::invalid_argument("domain bits out of range [0, 24]");
}

int parity_of(std::uint64_t x, std::uint64_t mask) {
  return std::popcount(x & mask) & 1;
}

}  // namespace

DynBitset::DynBitset(std::size_t size, bool fill)
    : size_(size), words_((size + 63) / 64, fill ? ~std::uint64_t{0} : 0) {
  if (fill && size % 64 != 0)
    words_.back() >>= (64 - size % 64);  // keep unused high bits zero
}

void DynBitset::set(std::size_t i, bool value) {
  const std::uint64_t bit = std::uint64_t{1} << (i & 63u);
  if (value)
    words_[i >> 6] |= bit;
  else
    words_[i >> 6] &= ~bit;
}

std::size_t DynBitset::count() const {
  std::size_t total = 0;
  for (std::uint64_t w : words_) total += static_cast<std::size_t>(std::popcount(w));
  return total;
}

bool DynBitset::any() const {
  for (std::uint64_t w : words_)
    if (w) return true;
  return false;
}

bool DynBitset::intersects(const DynBitset& other) const {
  const std::size_t words = std::min(words_.size(), other.words_.size());
  for (std::size_t i = 0; i < words; ++i)
    if (words_[i] & other.words_[i]) return true;
  return false;
}

DynBitset& DynBitset::operator&=(const DynBitset& other) {
  if (size_ != other.size_)
    throw std::invalid_argument("DynBitset: size mismatch in &=");
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= other.words_[i];
  return *this;
}

int ProtocolTree::cost() const {
  if (root < 0) return 0;
  std::function<int(int)> depth_of = [&](int idx) -> int {
    const ProtoNode& node = nodes[static_cast<std::size_t>(idx)];
    if (node.is_leaf) return 0;
    return 1 + std::max(depth_of(node.zero_child), depth_of(node.one_child));
  };
  return depth_of(root);
}

std::size_t ProtocolTree::leaf_count() const {
  std::size_t total = 0;
  for (const ProtoNode& node : nodes)
    if (node.is_leaf) ++total;
  return total;
}

void ProtocolTree::validate() const {
  check_domain_bits(alice_bits);
  check_domain_bits(bob_bits);
  if (root < 0 || root >= static_cast<int>(nodes.size()))
    throw std::invalid_argument("protocol: root index out of range");
  for (const ProtoNode& node : nodes) {
    if (node.is_leaf) {
      if (!(node.value >= -1.0 && node.value <= 1.0))
        throw std::invalid_argument("protocol: leaf value outside [-1, 1]");
      continue;
    }
    const std::size_t domain =
        node.owner == Party::kAlice ? alice_domain() : bob_domain();
    if (node.message.size() != domain)
      throw std::invalid_argument("protocol: message table size != owner domain");
    for (int child : {node.zero_child, node.one_child})
      if (child < 0 || child >= static_cast<int>(nodes.size()))
        throw std::invalid_argument("protocol: missing child");
  }
}

void RandomizedProtocol::validate() const {
  double total = 0.0;
  for (const auto& [p, tree] : components) {
    if (p < 0.0)
      throw std::invalid_argument("randomized protocol: negative probability");
    tree.validate();
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw std::invalid_argument("randomized protocol: probabilities must sum to 1");
}

EvalResult evaluate(const ProtocolTree& tree, std::uint64_t x, std::uint64_t y) {
  if (x >= tree.alice_domain() || y >= tree.bob_domain())
    throw std::invalid_argument("evaluate: input outside declared domain");
  if (tree.root < 0 || tree.root >= static_cast<int>(tree.nodes.size()))
    throw std::invalid_argument("evaluate: malformed tree (bad root)");
  EvalResult result;
  int idx = tree.root;
  for (;;) {
    const ProtoNode& node = tree.nodes[static_cast<std::size_t>(idx)];
    if (node.is_leaf) {
      result.value = node.value;
      return result;
    }
    const std::uint64_t own = node.owner == Party::kAlice ? x : y;
    const int bit = node.message.test(own) ? 1 : 0;
    result.transcript.push_back(bit);
    idx = bit ? node.one_child : node.zero_child;
    if (idx < 0 || idx >= static_cast<int>(tree.nodes.size()))
      throw std::invalid_argument("evaluate: malformed tree (missing child)");
  }
}

std::vector<std::pair<Rectangle, double>> leaf_rectangles(
    const ProtocolTree& tree) {
  tree.validate();
  std::vector<std::pair<Rectangle, double>> out;
  std::function<void(int, Rectangle)> walk = [&](int idx, Rectangle rect) {
    const ProtoNode& node = tree.nodes[static_cast<std::size_t>(idx)];
    if (node.is_leaf) {
      out.emplace_back(std::move(rect), node.value);
      return;
    }
    const bool alice = node.owner == Party::kAlice;
    const DynBitset& side = alice ? rect.alice_set : rect.bob_set;
    DynBitset zero_side(side.size());
    DynBitset one_side(side.size());
    for (std::size_t i = 0; i < side.size(); ++i) {
      if (!side.test(i)) continue;
      (node.message.test(i) ? one_side : zero_side).set(i);
    }
    Rectangle zero_rect = rect;
    Rectangle one_rect = std::move(rect);
    (alice ? zero_rect.alice_set : zero_rect.bob_set) = std::move(zero_side);
    (alice ? one_rect.alice_set : one_rect.bob_set) = std::move(one_side);
    walk(node.zero_child, std::move(zero_rect));
    walk(node.one_child, std::move(one_rect));
  };
  Rectangle full{DynBitset(tree.alice_domain(), true),
                 DynBitset(tree.bob_domain(), true)};
  walk(tree.root, std::move(full));
  return out;
}

ProtocolTree maj_xor_protocol(int d, int n) {
  if (d % 2 == 0) throw std::invalid_argument("maj_xor_protocol: d must be odd");
  if (d < 1 || d > n)
    throw std::invalid_argument("maj_xor_protocol: need 1 <= d <= n");
  check_domain_bits(n);
  ProtocolTree tree;
  tree.alice_bits = n;
  tree.bob_bits = n;
  const std::size_t domain = std::size_t{1} << n;

  // answer(y_prefix): Alice node announcing MAJ(x_1 y_1, ..., x_d y_d), with
  // the announced bit as the leaf value.
  auto make_answer = [&](std::uint64_t y_bits) -> int {
    ProtoNode alice;
    alice.is_leaf = false;
    alice.owner = Party::kAlice;
    alice.message = DynBitset(domain);
    for (std::uint64_t x = 0; x < domain; ++x) {
      // x_i y_i = -1 exactly when bits differ; majority is -1 when more than
      // half of the first d products are -1.
      const int minus_count = std::popcount((x ^ y_bits) & ((1ull << d) - 1));
      if (2 * minus_count > d) alice.message.set(x);
    }
    ProtoNode plus_leaf;
    plus_leaf.value = 1.0;
    ProtoNode minus_leaf;
    minus_leaf.value = -1.0;
    tree.nodes.push_back(plus_leaf);
    const int plus_idx = static_cast<int>(tree.nodes.size()) - 1;
    tree.nodes.push_back(minus_leaf);
    const int minus_idx = static_cast<int>(tree.nodes.size()) - 1;
    alice.zero_child = plus_idx;
    alice.one_child = minus_idx;
    tree.nodes.push_back(std::move(alice));
    return static_cast<int>(tree.nodes.size()) - 1;
  };

  // Bob announces y_1..y_d, one coordinate per level.
  std::function<int(int, std::uint64_t)> make_bob = [&](int level,
                                                        std::uint64_t y_bits) {
    if (level == d) return make_answer(y_bits);
    ProtoNode bob;
    bob.is_leaf = false;
    bob.owner = Party::kBob;
    bob.message = DynBitset(domain);
    for (std::uint64_t y = 0; y < domain; ++y)
      if ((y >> level) & 1u) bob.message.set(y);
    bob.zero_child = make_bob(level + 1, y_bits);
    bob.one_child = make_bob(level + 1, y_bits | (1ull << level));
    tree.nodes.push_back(std::move(bob));
    return static_cast<int>(tree.nodes.size()) - 1;
  };

  tree.root = make_bob(0, 0);
  return tree;
}

int ParityDT::depth() const {
  if (root < 0) return 0;
  std::function<int(int)> depth_of = [&](int idx) -> int {
    const ParityDTNode& node = nodes[static_cast<std::size_t>(idx)];
    if (node.is_leaf) return 0;
    return 1 + std::max(depth_of(node.plus_child), depth_of(node.minus_child));
  };
  return depth_of(root);
}

double ParityDT::evaluate(std::uint32_t z) const {
  int idx = root;
  for (;;) {
    const ParityDTNode& node = nodes[static_cast<std::size_t>(idx)];
    if (node.is_leaf) return node.value;
    // z_S = (-1)^{popcount(z & S)} under the set-bit-means-minus-one encoding.
    idx = parity_of(z, node.query_mask) ? node.minus_child : node.plus_child;
  }
}

ProtocolTree from_parity_dt(const ParityDT& dt) {
  check_domain_bits(dt.n);
  if (dt.root < 0 || dt.root >= static_cast<int>(dt.nodes.size()))
    throw std::invalid_argument("from_parity_dt: malformed tree");
  ProtocolTree tree;
  tree.alice_bits = dt.n;
  tree.bob_bits = dt.n;
  const std::size_t domain = std::size_t{1} << dt.n;

  std::function<int(int)> build = [&](int dt_idx) -> int {
    const ParityDTNode& dt_node = dt.nodes[static_cast<std::size_t>(dt_idx)];
    if (dt_node.is_leaf) {
      ProtoNode leaf;
      leaf.value = dt_node.value;
      tree.nodes.push_back(leaf);
      return static_cast<int>(tree.nodes.size()) - 1;
    }
    const std::uint32_t mask = dt_node.query_mask;
    // Bob's reply after Alice announced bit a encodes z_S = x_S * y_S, whose
    // bit is a XOR bit(y_S). Both a-branches continue to the same subtrees.
    auto make_bob = [&](int alice_bit) -> int {
      const int plus_idx = build(dt_node.plus_child);
      const int minus_idx = build(dt_node.minus_child);
      ProtoNode bob;
      bob.is_leaf = false;
      bob.owner = Party::kBob;
      bob.message = DynBitset(domain);
      for (std::uint64_t y = 0; y < domain; ++y)
        if ((alice_bit ^ parity_of(y, mask)) != 0) bob.message.set(y);
      bob.zero_child = plus_idx;   // z_S = +1
      bob.one_child = minus_idx;   // z_S = -1
      tree.nodes.push_back(std::move(bob));
      return static_cast<int>(tree.nodes.size()) - 1;
    };
    ProtoNode alice;
    alice.is_leaf = false;
    alice.owner = Party::kAlice;
    alice.message = DynBitset(domain);
    for (std::uint64_t x = 0; x < domain; ++x)
      if (parity_of(x, mask)) alice.message.set(x);
    alice.zero_child = make_bob(0);
    alice.one_child = make_bob(1);
    tree.nodes.push_back(std::move(alice));
    return static_cast<int>(tree.nodes.size()) - 1;
  };

  tree.root = build(dt.root);
  return tree;
}

ParityDT random_parity_dt(int n, int depth, std::uint64_t seed) {
  check_domain_bits(n);
  if (depth < 0) throw std::invalid_argument("random_parity_dt: negative depth");
  RngStream rng(seed, stream_id(/*purpose=*/0x70617269u, static_cast<std::uint64_t>(n),
                                static_cast<std::uint64_t>(depth)));
  ParityDT dt;
  dt.n = n;
  const std::uint32_t mask_bound = (n == 32) ? ~0u : ((1u << n) - 1u);
  std::function<int(int)> build = [&](int level) -> int {
    if (level == depth) {
      ParityDTNode leaf;
      leaf.value = rng.uniform_int(2) == 0 ? 1.0 : -1.0;
      dt.nodes.push_back(leaf);
      return static_cast<int>(dt.nodes.size()) - 1;
    }
    ParityDTNode node;
    node.is_leaf = false;
    node.query_mask =
        static_cast<std::uint32_t>(rng.uniform_int(mask_bound)) + 1u;  // nonzero
    node.plus_child = build(level + 1);
    node.minus_child = build(level + 1);
    dt.nodes.push_back(node);
    return static_cast<int>(dt.nodes.size()) - 1;
  };
  dt.root = build(0);
  return dt;
}

ProtocolTree random_protocol(int n, int d, std::uint64_t seed, bool real_leaves) {
  check_domain_bits(n);
  if (d < 0 || d > 2 * n)
    throw std::invalid_argument("random_protocol: need 0 <= d <= 2n");
  RngStream rng(seed, stream_id(/*purpose=*/0x70726f74u, static_cast<std::uint64_t>(n),
                                static_cast<std::uint64_t>(d),
                                real_leaves ? 1u : 0u));
  ProtocolTree tree;
  tree.alice_bits = n;
  tree.bob_bits = n;
  const std::size_t domain = std::size_t{1} << n;

  std::vector<Party> owner_by_level(static_cast<std::size_t>(d));
  for (auto& owner : owner_by_level)
    owner = rng.uniform_int(2) == 0 ? Party::kAlice : Party::kBob;

  // Balanced random table: exactly half the domain maps to 1.
  auto random_balanced_table = [&]() {
    std::vector<std::uint8_t> bits(domain, 0);
    for (std::size_t i = 0; i < domain / 2; ++i) bits[i] = 1;
    for (std::size_t i = domain - 1; i > 0; --i)
      std::swap(bits[i], bits[rng.uniform_int(i + 1)]);
    DynBitset table(domain);
    for (std::size_t i = 0; i < domain; ++i)
      if (bits[i]) table.set(i);
    return table;
  };

  std::function<int(int)> build = [&](int level) -> int {
    if (level == d) {
      ProtoNode leaf;
      leaf.value = real_leaves ? 2.0 * rng.uniform() - 1.0
                               : (rng.uniform_int(2) == 0 ? 1.0 : -1.0);
      tree.nodes.push_back(leaf);
      return static_cast<int>(tree.nodes.size()) - 1;
    }
    ProtoNode node;
    node.is_leaf = false;
    node.owner = owner_by_level[static_cast<std::size_t>(level)];
    node.message = random_balanced_table();
    node.zero_child = build(level + 1);
    node.one_child = build(level + 1);
    tree.nodes.push_back(std::move(node));
    return static_cast<int>(tree.nodes.size()) - 1;
  };

  tree.root = build(0);
  return tree;
}

namespace {

std::string pack_hex(const DynBitset& bits) {
  static const char* digits = "0123456789abcdef";
  const std::size_t bytes = (bits.size() + 7) / 8;
  std::string hex;
  hex.reserve(bytes * 2);
  for (std::size_t j = 0; j < bytes; ++j) {
    unsigned byte = 0;
    for (std::size_t k = 0; k < 8; ++k) {
      const std::size_t i = 8 * j + k;
      if (i < bits.size() && bits.test(i)) byte |= 1u << k;
    }
    hex.push_back(digits[byte >> 4]);
    hex.push_back(digits[byte & 0xF]);
  }
  return hex;
}

DynBitset unpack_hex(const std::string& hex, std::size_t size) {
  const std::size_t bytes = (size + 7) / 8;
  if (hex.size() != bytes * 2)
    throw std::invalid_argument("protocol JSON: msg hex length mismatch");
  auto nibble = [](char c) -> unsigned {
    if (c >= '0' && c <= '9') return static_cast<unsigned>(c - '0');
    if (c >= 'a' && c <= 'f') return static_cast<unsigned>(c - 'a' + 10);
    if (c >= 'A' && c <= 'F') return static_cast<unsigned>(c - 'A' + 10);
    throw std::invalid_argument("protocol JSON: bad hex digit");
  };
  DynBitset bits(size);
  for (std::size_t j = 0; j < bytes; ++j) {
    const unsigned byte = (nibble(hex[2 * j]) << 4) | nibble(hex[2 * j + 1]);
    for (std::size_t k = 0; k < 8; ++k) {
      const std::size_t i = 8 * j + k;
      if (i < size && ((byte >> k) & 1u)) bits.set(i);
    }
  }
  return bits;
}

nlohmann::json node_to_json(const ProtocolTree& tree, int idx) {
  const ProtoNode& node = tree.nodes[static_cast<std::size_t>(idx)];
  if (node.is_leaf) return nlohmann::json{{"leaf", node.value}};
  return nlohmann::json{
      {"owner", node.owner == Party::kAlice ? "A" : "B"},
      {"msg", pack_hex(node.message)},
      {"zero", node_to_json(tree, node.zero_child)},
      {"one", node_to_json(tree, node.one_child)}};
}

int node_from_json(const nlohmann::json& j, ProtocolTree& tree) {
  if (j.contains("leaf")) {
    ProtoNode leaf;
    leaf.value = j.at("leaf").get<double>();
    tree.nodes.push_back(leaf);
    return static_cast<int>(tree.nodes.size()) - 1;
  }
  const std::string owner = j.at("owner").get<std::string>();
  if (owner != "A" && owner != "B")
    throw std::invalid_argument("protocol JSON: owner must be \"A\" or \"B\"");
  const int zero_idx = node_from_json(j.at("zero"), tree);
  const int one_idx = node_from_json(j.at("one"), tree);
  ProtoNode node;
  node.is_leaf = false;
  node.owner = owner == "A" ? Party::kAlice : Party::kBob;
  const std::size_t domain =
      node.owner == Party::kAlice ? tree.alice_domain() : tree.bob_domain();
  node.message = unpack_hex(j.at("msg").get<std::string>(), domain);
  node.zero_child = zero_idx;
  node.one_child = one_idx;
  tree.nodes.push_back(std::move(node));
  return static_cast<int>(tree.nodes.size()) - 1;
}

}  // namespace

nlohmann::json protocol_to_json(const ProtocolTree& tree) {
  tree.validate();
  return nlohmann::json{{"alice_bits", tree.alice_bits},
                        {"bob_bits", tree.bob_bits},
                        {"root", node_to_json(tree, tree.root)}};
}

ProtocolTree protocol_from_json(const nlohmann::json& j) {
  ProtocolTree tree;
  tree.alice_bits = j.at("alice_bits").get<int>();
  tree.bob_bits = j.at("bob_bits").get<int>();
  check_domain_bits(tree.alice_bits);
  check_domain_bits(tree.bob_bits);
  tree.root = node_from_json(j.at("root"), tree);
  tree.validate();
  return tree;
}

}  // namespace fiberlab
