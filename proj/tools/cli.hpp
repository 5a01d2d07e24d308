#pragma once

#include <iosfwd>
#include <vector>

namespace blockshampoo::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kNumerical = 2, kIo = 3 };

/// Entry point of the `blockshampoo` tool. Normal output goes to `out`,
/// diagnostics to `err`; the return value is one of ExitCode.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// x values visited by scalar-sweep, ascending: m * 10^-e for m = 1..9 and
/// e = 6..1, merged with 0.01, 0.02, ..., 0.99.
std::vector<double> scalar_sweep_grid();

}  // namespace blockshampoo::cli
