#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mgpms::cli {

/// Runs one command line (without the program name). Failures print a single
/// `error: <code>: <message>` line on `err` and return nonzero.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mgpms::cli
