#pragma once

#include <iosfwd>

namespace mixpo::cli {

/// Exit statuses shared by every subcommand.
enum ExitCode : int {
  kSuccess = 0,
  kValidationError = 1,
  kNumericalFailure = 2,
  kCheckFailure = 3,
};

/// Entry point behind the `mixpo` executable; writes to the given streams.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mixpo::cli
