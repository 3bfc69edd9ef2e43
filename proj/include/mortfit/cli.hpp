#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mortfit {

/// Exit statuses of the command-line tool.
inline constexpr int kExitConverged = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitNotConverged = 2;

/// Run the `mortfit` command line. `args` excludes the program name. Normal
/// output goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

} // namespace mortfit
