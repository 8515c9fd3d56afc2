#pragma once

#include <string>
#include <vector>

namespace abstain {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // validation or metric failure
inline constexpr int kExitUsage = 2;    // bad arguments or I/O error

/// Runs the `abstain-lab` command line. Never throws; returns the exit code.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace abstain
