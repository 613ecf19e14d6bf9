#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rlc {

inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes: 0 success, 1 input or validation error, 2 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace rlc
