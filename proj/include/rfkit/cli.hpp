#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rfkit::cli {

// Exit codes returned by run().
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Runs one subcommand. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rfkit::cli
