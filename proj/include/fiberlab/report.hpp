#pragma once

// Small reporting utilities shared by the verification modules and the CLI:
// Wilson score intervals for Monte-Carlo tail estimates and deterministic
// text/CSV emission (fixed float formatting, fixed field order).

#include <cstdint>
#include <string>
#include <vector>

namespace fiberlab {

struct WilsonInterval {
  double low = 0.0;
  double high = 1.0;
};

// Wilson score interval for a binomial proportion at the given z value
// (z = 3 is the library-wide default, recorded in every report).
WilsonInterval wilson_interval(std::uint64_t hits, std::uint64_t trials,
                               double z = 3.0);

// Fixed-format double rendering used for all CSV output ("%.12g" semantics);
// the same value always renders to the same bytes.
std::string format_double(double x);

// Joins fields with commas; fields are expected to be comma-free (all our
// schemas emit numbers, identifiers, and verdict tokens only).
std::string join_csv(const std::vector<std::string>& fields);

// Writes content to path, overwriting; throws std::runtime_error on failure.
void write_text_file(const std::string& path, const std::string& content);

}  // namespace fiberlab
