#pragma once

namespace ordcfa {

/// Exit codes: 0 success, 1 input error, 2 numerical nonconvergence.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 1;
inline constexpr int kExitNonconvergence = 2;

int run_cli(int argc, char** argv);

}  // namespace ordcfa
