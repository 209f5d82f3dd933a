#pragma once

#include <ostream>

namespace safe::cli {

/// Entry point of the `safe` tool. Returns the process exit code; usage and
/// diagnostics go to `err`, results to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace safe::cli
