#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xling {

/// Runs one command line (args exclude the program name). Returns the exit
/// status: 0 ok, 1 usage, 2 config, 3 data, 4 numeric failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace xling
