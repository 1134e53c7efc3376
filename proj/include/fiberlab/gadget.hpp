#pragma once

// Two-party gadgets g : {±1}^{m1} x {±1}^{m2} -> {±1}, their 2-D Fourier
// tables, the balance condition, and the two protocol transformations that
// move Fourier growth between the XOR lift and a general gadget lift.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fiberlab/protocol.hpp"

namespace fiberlab {

struct Gadget {
  int m1 = 0;
  int m2 = 0;
  // Index: x | (y << m1) with the usual set-bit-means-minus-one encoding on
  // each side; entries are ±1.
  std::vector<std::int8_t> values;

  std::size_t table_size() const { return std::size_t{1} << (m1 + m2); }
  int operator()(std::uint32_t x, std::uint32_t y) const {
    return values[x | (y << m1)];
  }
  void validate() const;
};

struct GadgetSpectrum {
  int m1 = 0;
  int m2 = 0;
  std::vector<double> coeffs;  // index: S | (T << m1)

  double coeff(std::uint32_t S, std::uint32_t T) const {
    return coeffs[S | (T << m1)];
  }
};

// All 2^{m1+m2} coefficients g^(S,T) = E[g(x,y) x_S y_T] by enumeration.
// Requires m1 + m2 <= 20.
GadgetSpectrum gadget_fourier(const Gadget& g);

// True iff g^(S, empty) = g^(empty, T) = 0 for all S, T (exact for the dyadic
// tables produced here; tolerance 1e-12).
bool check_balanced(const Gadget& g);

// g'(x, y) = x_{m1+1} y_{m2+1} * g(x_{<=m1}, y_{<=m2}); always balanced.
Gadget balance_embed(const Gadget& g);

// Named built-ins: "xor" (m1 = m2 = 1, g = xy), "and" (alias "and±";
// 2*1[x = y = +1] - 1 on one bit per side), "ip2" (two-bit inner product,
// the parity of the two coordinatewise ANDs).
Gadget builtin_gadget(const std::string& name);

// Lexicographically smallest (S | T<<m1 order) maximizer of |g^(S,T)| over
// nonempty S and T. Ties broken toward the smaller packed index.
std::pair<std::uint32_t, std::uint32_t> argmax_gadget_coeff(
    const GadgetSpectrum& spec);

// A protocol over block inputs x in ({±1}^{m1})^n, y in ({±1}^{m2})^n.
// Block i of Alice's input occupies index bits [i*m1, (i+1)*m1).
struct LiftedProtocol {
  ProtocolTree tree;
  int n = 0;
  int m1 = 0;
  int m2 = 0;

  void validate() const;
};

// C'(x, y) = C(x', y') with x'_i = x_{i,S} and y'_i = y_{i,T}; the tree shape
// and cost are unchanged, only message tables are re-indexed. Requires S, T
// nonempty.
LiftedProtocol xor_to_g_protocol(const ProtocolTree& tree, const Gadget& g,
                                 std::uint32_t S, std::uint32_t T);

struct BlockAssignment {
  std::vector<std::uint32_t> alice_masks;  // S_i, nonempty, one per block
  std::vector<std::uint32_t> bob_masks;    // T_i, nonempty, one per block
};

// The reverse transformation: from a lifted protocol to a randomized protocol
// over single bits. On input x in {±1}^n, Alice plays C on a uniformly random
// completion x' with x'_{i,S_i} = x_i (respectively Bob with T_i). The mixture
// over completions is materialized exactly: one deterministic component per
// choice of per-block coset representatives, all equally likely. Requires
// n(m1 + m2) small enough that 2^{n(m1-1)} * 2^{n(m2-1)} components fit in
// memory (enforced at 2^16 components).
RandomizedProtocol g_to_xor_protocol(const LiftedProtocol& lifted,
                                     const Gadget& g,
                                     const BlockAssignment& assignment);

// Gadget JSON: {"m1": int, "m2": int, "values": hex} where the hex string
// packs one bit per table entry (set bit = value -1) in the same little-endian
// byte order as protocol message tables.
nlohmann::json gadget_to_json(const Gadget& g);
Gadget gadget_from_json(const nlohmann::json& j);

}  // namespace fiberlab
