#pragma once

// Deterministic and randomized two-party protocol trees over finite per-party
// input domains, with explicit rectangle semantics.
//
// A tree node is either a leaf carrying a value in [-1, 1] or an inner node
// owned by one party. The owner's message at a node depends only on the
// owner's input (stored as an explicit bit table over the owner's domain), so
// the set of inputs reaching any node is a combinatorial rectangle. The
// transcript is implicit in the tree position.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace fiberlab {

// Minimal dynamic bitset over a finite index domain; used both for message
// tables (bit per owner input) and rectangle sides (membership per input).
class DynBitset {
 public:
  DynBitset() = default;
  explicit DynBitset(std::size_t size, bool fill = false);

  bool test(std::size_t i) const {
    return (words_[i >> 6] >> (i & 63u)) & 1u;
  }
  void set(std::size_t i, bool value = true);
  std::size_t size() const { return size_; }
  std::size_t count() const;
  bool any() const;
  bool intersects(const DynBitset& other) const;
  DynBitset& operator&=(const DynBitset& other);
  friend bool operator==(const DynBitset&, const DynBitset&) = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint64_t> words_;
};

enum class Party : std::uint8_t { kAlice, kBob };

struct ProtoNode {
  bool is_leaf = true;
  double value = 0.0;  // leaf payload
  Party owner = Party::kAlice;
  DynBitset message;  // inner payload: message bit per owner-side input
  int zero_child = -1;
  int one_child = -1;
};

struct ProtocolTree {
  int alice_bits = 0;
  int bob_bits = 0;
  std::vector<ProtoNode> nodes;  // node pool; `root` indexes into it
  int root = -1;

  std::size_t alice_domain() const { return std::size_t{1} << alice_bits; }
  std::size_t bob_domain() const { return std::size_t{1} << bob_bits; }
  // Communication cost: maximum root-to-leaf path length.
  int cost() const;
  std::size_t leaf_count() const;
  // Structural checks: children in range, message tables sized to the owner
  // domain, leaf values in [-1, 1]. Throws std::invalid_argument on failure.
  void validate() const;
};

struct Rectangle {
  DynBitset alice_set;
  DynBitset bob_set;
};

struct RandomizedProtocol {
  std::vector<std::pair<double, ProtocolTree>> components;
  // Probabilities nonnegative and summing to 1 within 1e-12.
  void validate() const;
};

struct EvalResult {
  double value = 0.0;
  std::vector<int> transcript;  // message bits along the root-to-leaf path
};

// Walks the tree on inputs (x, y); throws on malformed trees or out-of-domain
// inputs.
EvalResult evaluate(const ProtocolTree& tree, std::uint64_t x, std::uint64_t y);

// All leaves with their rectangles, in depth-first (zero-child-first) order.
// The rectangles are pairwise disjoint and cover the product domain.
std::vector<std::pair<Rectangle, double>> leaf_rectangles(
    const ProtocolTree& tree);

// Bob announces y_1..y_d, then Alice announces MAJ(x_1 y_1, ..., x_d y_d),
// which is also the leaf value. Cost d+1. Requires d odd, d <= n.
ProtocolTree maj_xor_protocol(int d, int n);

// Parity decision trees over {±1}^n: each inner node queries a parity z_S and
// branches on its sign.
struct ParityDTNode {
  bool is_leaf = true;
  double value = 0.0;            // leaf payload
  std::uint32_t query_mask = 0;  // inner payload: subset S as a bitmask
  int plus_child = -1;
  int minus_child = -1;
};

struct ParityDT {
  int n = 0;
  std::vector<ParityDTNode> nodes;
  int root = -1;

  int depth() const;
  double evaluate(std::uint32_t z) const;
};

// Standard 2-bits-per-query simulation: for a query S, Alice sends x_S and
// Bob replies with x_S * y_S, which both parties decode as z_S. The XOR-fiber
// of the result reproduces the tree's function exactly. Cost = 2 * depth.
ProtocolTree from_parity_dt(const ParityDT& dt);

// Full random parity decision tree of the given depth: nonempty query masks,
// leaf values uniform in {±1}. Reproducible from the seed.
ParityDT random_parity_dt(int n, int depth, std::uint64_t seed);

// Full random cost-d tree over {±1}^n x {±1}^n: a uniformly random owner per
// level and an independent balanced random message table per inner node.
// Leaves are random ±1, or uniform in [-1, 1] when real_leaves is set.
// Requires d <= 2n. Reproducible from the seed.
ProtocolTree random_protocol(int n, int d, std::uint64_t seed,
                             bool real_leaves = false);

// JSON schema:
//   {"alice_bits": int, "bob_bits": int, "root": node}
//   node = {"leaf": float}
//        | {"owner": "A"|"B", "msg": hex, "zero": node, "one": node}
// where `msg` packs the owner-domain bit table little-endian: byte j holds
// table bits 8j..8j+7 with bit 8j in the least significant position, and the
// hex string lists bytes in increasing j with two lowercase digits each.
nlohmann::json protocol_to_json(const ProtocolTree& tree);
ProtocolTree protocol_from_json(const nlohmann::json& j);

}  // namespace fiberlab
