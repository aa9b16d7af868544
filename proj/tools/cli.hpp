#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace winseg::cli {

// Runs the command line `args` (without the program name). Returns 0 on
// success, 1 on runtime failure, 2 on usage errors; failures are reported as
// one JSON object on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace winseg::cli
