#pragma once

#include <iosfwd>

namespace persuade::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kOperational = 1;
inline constexpr int kBreach = 2;

/// Parses argv and runs the chosen subcommand.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace persuade::cli
