#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace f3net {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,   // unexpected failure
  kExitUsage = 2,      // bad arguments or configuration
  kExitData = 3,       // unreadable, missing or inconsistent data
  kExitNumerical = 4,  // training diverged (NonFiniteLoss)
};

/// Runs the f3net command line. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace f3net
