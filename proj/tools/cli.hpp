#pragma once

#include <iosfwd>

namespace vargplvm::cli {

enum ExitCode { kOk = 0, kArgumentError = 2, kIoError = 3, kNumericalError = 4 };

// Runs one command line ("vargplvm <command> [flags]"). Messages go to `out`,
// errors to `err`; the return value is the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vargplvm::cli
