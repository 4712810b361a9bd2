#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rhlp {

// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumerical = 3,
};

// Subcommands: fit, select, simulate, study, baseline, evaluate. Results go
// to files or `out`; diagnostics go to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

}  // namespace rhlp
