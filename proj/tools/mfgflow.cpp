#include <string>
#include <vector>

#include "mfg/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mfg::cli::run_cli(args);
}
