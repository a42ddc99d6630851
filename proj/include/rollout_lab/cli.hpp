#ifndef ROLLOUT_LAB_CLI_HPP
#define ROLLOUT_LAB_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace rollout_lab::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kInvalidArgument = 2,
  kDimensionMismatch = 3,
  kInvariantViolation = 4,
  kNumericalFailure = 5,
  kSchema = 6,
  kIo = 7,
};

/// Runs the command line `args` (args[0] is the program name). Results go to
/// `out`; failures are reported on `err` as one JSON object.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rollout_lab::cli

#endif  // ROLLOUT_LAB_CLI_HPP
