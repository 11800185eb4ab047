#pragma once

#include <iosfwd>

namespace vitct::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;    // bad flags, config, or unreadable inputs
inline constexpr int kExitEmpty = 3;    // nothing to process
inline constexpr int kExitNumeric = 4;  // non-finite values at runtime
inline constexpr int kExitInternal = 1;

// Entry point of the `vitct` tool. Subcommands: synth, scan, train, predict,
// evaluate, sweep.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vitct::cli
