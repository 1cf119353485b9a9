#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace isomix::cli {

enum ExitCode { kOk = 0, kInputError = 2, kEstimationError = 3, kConfigError = 4 };

// Runs one command line. args[0] is the program name. Primary output goes to
// --output when given, else to `out`; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// key = value lines; '#' starts a comment; quotes and [ ] around values are
// stripped. Throws std::invalid_argument with the offending line number.
std::map<std::string, std::string> parse_key_values(std::istream& in);

}  // namespace isomix::cli
