#pragma once

#include <iosfwd>

namespace keymatch3d {

/// Exit codes of the command-line front end.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2 };

/// Entry point of the `keymatch3d` executable. Subcommands: synth-pairs,
/// train, build-repo, eval, match.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace keymatch3d
