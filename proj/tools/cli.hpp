#pragma once

// Command-line front end: gen-data, train, infer, eval, baseline.

#include <iosfwd>
#include <string>
#include <vector>

namespace deepsum::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

/// args excludes the program name. Errors are reported on err and mapped to
/// the exit codes above; usage errors count as configuration errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace deepsum::cli
