#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace wce {

/// Runs one CLI invocation. Returns 0 on success, 2 on usage errors
/// (unknown subcommand, missing or malformed flags) and 1 on runtime errors.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace wce
