#pragma once

namespace uniada {

/// Command-line entry point (argv[0] included). Returns the process exit
/// status: 0 success, 1 usage error, 2 runtime or invariant failure.
int run_cli(int argc, const char *const *argv);

} // namespace uniada
