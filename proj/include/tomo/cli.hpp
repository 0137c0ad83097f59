#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tomo {

/// Runs one command line (argv[0] excluded) and returns the process exit
/// code: 0 success, 1 verification failure, 2 configuration error, 3 I/O
/// error, 4 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace tomo
