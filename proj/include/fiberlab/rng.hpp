#pragma once

// Counter-based random number generation (Philox4x32-10) with independent,
// addressable streams. Every stochastic routine in this library takes a
// (seed, stream) pair, so results are reproducible bit-for-bit regardless of
// thread count or call interleaving.

#include <array>
#include <cstdint>
#include <functional>

namespace fiberlab {

// One application of the Philox4x32 10-round bijection.
// Reference test vector: key = {0,0}, ctr = {0,0,0,0} maps to
// {0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key);

// A deterministic stream of random values. The 64-bit seed becomes the Philox
// key; the 64-bit stream id occupies counter words 0-1 and a running block
// index occupies counter words 2-3, so distinct (seed, stream) pairs never
// share Philox inputs.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on (0, 1]; safe as a log argument.
  double uniform_open();
  // Uniform on {0, 1, ..., bound-1} by rejection (unbiased).
  std::uint64_t uniform_int(std::uint64_t bound);
  // Standard normal via Box-Muller; draws are buffered in pairs.
  double normal();
  // Standard normal conditioned on [-half_width, half_width], by rejection.
  double truncated_normal(double half_width);

  // UniformRandomBitGenerator interface (for std::shuffle and friends).
  using result_type = std::uint32_t;
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return 0xffffffffu; }
  result_type operator()() { return next_u32(); }

 private:
  void refill();

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffer_pos_ = 4;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

// Combines tag values into a stream id. Small convenience so call sites don't
// hand-roll bit packing; mixing is bijective enough for id separation (it is
// not a hash table, collisions only matter if two call sites pick identical
// tags, which code review rules out).
std::uint64_t stream_id(std::uint64_t purpose, std::uint64_t a = 0,
                        std::uint64_t b = 0, std::uint64_t c = 0);

// Runs body(shard) for shard = 0..shard_count-1 on a small thread pool and
// returns once all complete. Shard count is fixed by the caller (not by
// hardware) so that any shard-indexed randomness is machine-independent.
void parallel_shards(int shard_count, const std::function<void(int)>& body);

// Fixed shard count used by the library's internal Monte Carlo loops.
inline constexpr int kMonteCarloShards = 16;

}  // namespace fiberlab
