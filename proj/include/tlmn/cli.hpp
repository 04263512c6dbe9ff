#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tlmn {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs the `tlmn` command line (arguments without the program name).
/// Failures print one "error: <kind>: <message>" line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tlmn
