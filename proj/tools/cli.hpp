#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stlda::cli {

/// Process exit codes, one per error category.
enum ExitCode : int {
    kOk = 0,
    kUnexpected = 1,
    kConfig = 2,
    kIo = 3,
    kParse = 4,
    kNumeric = 5,
    kFormat = 6,
    kData = 7,
};

/// Runs the command line `args` (args[0] is the program name). Results go to
/// `out`, progress and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stlda::cli
