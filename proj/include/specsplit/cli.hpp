#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace specsplit::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kDivergence = 3,
};

/// Runs one subcommand (import, downsample, augment, train, eval, search,
/// metrics, demo). args excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main_entry(int argc, char** argv);

}  // namespace specsplit::cli
