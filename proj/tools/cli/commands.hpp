#pragma once

#include <string>
#include <vector>

namespace nnsb::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDependency = 3;
inline constexpr int kExitDivergence = 4;

/// Parses argv, runs one subcommand and maps errors to exit codes.
int run(int argc, char** argv);

/// Subcommand names in help order.
const std::vector<std::string>& subcommands();

}  // namespace nnsb::cli
