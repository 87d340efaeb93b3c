#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace macrt::cli {

enum ExitCode : int {
  kOk = 0,
  kInternal = 1,
  kInputError = 2,
  kPrecondition = 3,
  kTargetUnreachable = 4,
};

// Entry point shared by the executable and the tests. args[0] is the program
// name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace macrt::cli
