#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tilq::app {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kConfig = 2,
    kAssumption = 3,
    kNumerical = 4,
    kVerificationFail = 5,
    kInconclusive = 6,
};

/// Parses the command line and runs one subcommand. Never throws; errors are
/// printed to `err` as "error[<category>]: <message>".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tilq::app
