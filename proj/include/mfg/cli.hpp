#pragma once

#include <string>
#include <vector>

namespace mfg::cli {

/// Runs the command line (args excludes the program name) and returns the
/// process exit code: 0 success, 1 runtime failure, 2 configuration error.
int run_cli(const std::vector<std::string>& args);

}  // namespace mfg::cli
