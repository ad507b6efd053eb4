#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace auxskip::cli {

// Runs the command line `args` (without the program name) and returns the
// process exit code: 0 on success, 1 for usage and configuration errors, 2 for
// missing or inconsistent inputs, 3 when a search diverges.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace auxskip::cli
