#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xmr::cli {

/// Runs one `xmr` invocation. `args` excludes the program name.
/// Returns 0 on success, 1 on a runtime error and 2 on bad flags.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, const char* const* argv);

}  // namespace xmr::cli
