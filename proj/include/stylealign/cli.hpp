#pragma once

#include <string>
#include <vector>

namespace stylealign {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Parses argv (including the program name) and runs one subcommand.
auto parse_and_dispatch(int argc, const char *const *argv) -> int;
auto parse_and_dispatch(const std::vector<std::string> &args) -> int;

}    // namespace stylealign
