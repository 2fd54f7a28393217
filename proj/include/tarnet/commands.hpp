#pragma once

#include <string>
#include <vector>

namespace tarnet {

// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumerical = 3,
};

// Parses and runs one subcommand (simulate, train-source, transfer, cita,
// evaluate, full-study). args[0] is the program name. Errors are reported on
// stderr and mapped to an exit code.
int run_cli(const std::vector<std::string>& args);

}  // namespace tarnet
