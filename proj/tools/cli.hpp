#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace slowfast::cli {

inline constexpr int kExitPass = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitCheckFailed = 2;

/// Runs one subcommand. `args` excludes the program name. Progress and
/// summaries go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Names accepted as the first argument.
const std::vector<std::string>& subcommands();

}  // namespace slowfast::cli
