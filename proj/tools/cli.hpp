#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace intentgrid::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kValidation = 2,
  kIo = 3,
  kMismatch = 4,
};

/// Environment variables named INTENTGRID_<OPTION> (upper case, dashes as
/// underscores) supply values for flags not given on the command line.
inline constexpr const char* kEnvPrefix = "INTENTGRID_";

/// Runs the command line `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace intentgrid::cli
