#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace tjaidl::cli {

// Stable process exit codes.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kMissingCheckpoint = 3,
  kLabelLeak = 4,
};

/// Runs one command line (args[0] is the program name). Human-readable
/// output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tjaidl::cli
