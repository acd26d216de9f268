#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dovis::cli {

enum ExitCode : int {
    kOk = 0,
    kBoundViolation = 1,
    kUsageError = 2,
    kDataError = 3,
};

/// Environment variable naming the default output root.
inline constexpr const char *kOutRootEnv = "DOVIS_OUT_ROOT";

/// Runs the command line `args` (without the program name) and returns the
/// process exit code. Never throws.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace dovis::cli
