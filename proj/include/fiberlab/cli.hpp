#pragma once

// Command-line surface. Subcommands: fiber, growth, gadget, clean-sim,
// concentration, coin, gap-hamming, corpus. Global flags --seed (environment
// override FIBERLAB_SEED), --out, --format {csv, json}.
//
// Exit codes: 0 success; 1 when an emitted report contains a FAIL verdict;
// 2 on usage errors (unknown subcommand or flag, bad parameter values).
// Output is byte-identical across reruns with the same flags and seed.

namespace fiberlab {

int cli_main(int argc, const char* const* argv);

}  // namespace fiberlab
