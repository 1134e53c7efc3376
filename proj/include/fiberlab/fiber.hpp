#pragma once

// Fibers of two-party protocols: the XOR-fiber h(z) = 2^{-n} sum_x C(x, x⊙z)
// and the g-fiber h(z) = E[C(x,y) | g(x_i, y_i) = z_i for all i], both exact,
// plus brute-force Fourier coefficients of lifted-domain protocols.

#include <cstdint>
#include <vector>

#include "fiberlab/boolean_fn.hpp"
#include "fiberlab/gadget.hpp"
#include "fiberlab/protocol.hpp"

namespace fiberlab {

// Direct-definition route: enumerates all 4^n input pairs. Requires a tree
// over {±1}^n x {±1}^n with n <= 14.
BooleanFn xor_fiber(const ProtocolTree& tree);

// Linearity extension: probability-weighted average of component fibers.
BooleanFn xor_fiber(const RandomizedProtocol& randomized);

// Independent cross-check route through the leaf-rectangle decomposition:
// h(z) = sum_leaves value * |{x : x in X_leaf, x⊙z in Y_leaf}| / 2^n, with the
// per-leaf counts computed as an XOR-convolution of rectangle indicators via
// the transform (not by pair enumeration).
BooleanFn xor_fiber_via_rectangles(const ProtocolTree& tree);

// Conditional average over {(x, y) : g(x_i, y_i) = z_i for all i}; reports the
// offending z if some conditional set is empty (cannot happen for balanced g).
// Requires n(m1 + m2) <= 24.
BooleanFn g_fiber(const LiftedProtocol& lifted, const Gadget& g);

// Mixture version, by linearity over components sharing (n, m1, m2).
BooleanFn g_fiber(const RandomizedProtocol& randomized, int n, const Gadget& g);

// All 2^{n(m1+m2)} coefficients of the lifted protocol's multilinear
// expansion. The packed index places Alice's n*m1 subset bits low and Bob's
// n*m2 subset bits high; within a party, block i occupies bits [i*m, (i+1)*m).
struct LiftedSpectrum {
  int n = 0;
  int m1 = 0;
  int m2 = 0;
  std::vector<double> coeffs;

  // Coefficient at per-block subsets S_i of [m1], T_i of [m2], passed packed
  // (alice_masks bit i*m1+j = j in S_i, similarly for Bob).
  double coeff(std::uint64_t alice_masks, std::uint64_t bob_masks) const {
    return coeffs[alice_masks | (bob_masks << (n * m1))];
  }
};

// Brute force; requires n(m1 + m2) <= 16.
LiftedSpectrum lifted_fourier(const LiftedProtocol& lifted);

// Checks, for every I subseteq [n], the identity between the g-fiber's
// coefficient at I and the gadget-weighted sum of lifted coefficients
// sum_{S_i, T_i nonempty for i in I} C^(S^I, T^I) prod_{i in I} g^(S_i, T_i).
// Returns the maximum absolute discrepancy over all I. Requires balanced g.
double verify_fact_g_fiber_fourier(const LiftedProtocol& lifted,
                                   const Gadget& g);

}  // namespace fiberlab
