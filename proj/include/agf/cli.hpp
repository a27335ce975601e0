#pragma once

#include <iosfwd>

namespace agf {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,
    kExitConfig = 3,
    kExitDependency = 4,
    kExitRuntime = 5,
};

// Entry point of the `agf` tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace agf
