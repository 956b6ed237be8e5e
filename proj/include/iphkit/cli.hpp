#pragma once

namespace iphkit {

// Entry point of the command-line tool.  Returns the process exit code:
// 0 success, 1 validation failure (bad arguments, malformed files,
// inconsistent models), 2 engine precondition failure, 3 numerical
// non-convergence.
int run_cli(int argc, const char* const* argv);

}  // namespace iphkit
