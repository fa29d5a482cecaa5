#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace henet {

// Exit codes; every failure prints one diagnostic line on stderr.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitBuild = 3;
inline constexpr int kExitData = 4;
inline constexpr int kExitNumeric = 5;
inline constexpr int kExitIo = 6;

// Runs one CLI invocation (args exclude the program name).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace henet
