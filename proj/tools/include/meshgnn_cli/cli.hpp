#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace meshgnn::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kGeneration = 3,
  kDivergence = 4,
};

// Runs one command line (without the program name). Machine-readable output goes
// to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace meshgnn::cli
