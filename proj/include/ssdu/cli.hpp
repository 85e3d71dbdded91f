#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ssdu::cli {

/// Runs one subcommand; args excludes the program name.
/// Returns 0 on success, 2 on usage or configuration errors, 1 on runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ssdu::cli
