#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ebm3d {

// Runs one command line (args[0] is the program name). Errors are reported
// on `err` as "error: <category>: <message>" and yield a nonzero status.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ebm3d
