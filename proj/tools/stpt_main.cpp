#include <vector>

#include "stpt/cli/driver.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return stpt::cli::run_cli(args);
}
