#pragma once

#include <iosfwd>

namespace tlc {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitIo = 2, kExitNumeric = 3 };

/// Entry point of the `tlc` tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tlc
