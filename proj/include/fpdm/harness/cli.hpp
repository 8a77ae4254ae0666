#pragma once

#include <iosfwd>

namespace fpdm::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitAudit = 4;

// Subcommands train, sample, sweep, eval and gradcheck. Returns the exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Keeps large tensor buffers in the heap instead of fresh mmaps (glibc only).
void tune_allocator();

}  // namespace fpdm::harness
