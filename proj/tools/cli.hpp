#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ipmocp::cli {

enum ExitCode : int { kConverged = 0, kUsage = 1, kSolverFailure = 2, kIo = 3 };

/// Runs the command line `args` (without the program name). Progress and
/// the final report go to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ipmocp::cli
