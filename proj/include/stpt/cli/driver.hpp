#pragma once

#include <string>
#include <vector>

namespace stpt::cli {

// Full command-line entry point (subcommand dispatch); argv-style arguments
// without the program name. Returns the process exit status.
int run_cli(const std::vector<std::string>& args);

}  // namespace stpt::cli
