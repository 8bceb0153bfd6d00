#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace geogen {

enum ExitCode : int { kExitOk = 0, kExitInvalid = 1, kExitMissing = 2 };

// Full command-line entry point; args excludes the program name. Progress goes
// to out, diagnostics to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace geogen
