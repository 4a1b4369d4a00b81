#ifndef REGIONQA_TOOLS_CLI_HPP_
#define REGIONQA_TOOLS_CLI_HPP_

#include <ostream>
#include <span>
#include <string>

namespace regionqa::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumeric = 3,
};

/// Entry point behind the `regionqa` binary. `args` excludes the program name.
int run_command(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace regionqa::cli

#endif  // REGIONQA_TOOLS_CLI_HPP_
