#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace noisycon::cli {

/// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
enum ExitCode : int { kSuccess = 0, kRuntimeError = 1, kUsageError = 2 };

/// Runs one invocation; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace noisycon::cli
