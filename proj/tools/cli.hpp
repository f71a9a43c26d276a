#pragma once

#include <iosfwd>

namespace omada::cli {

/// Entry point of the `omada` tool. Returns the process exit code: 0 on
/// success, 1 on a runtime failure, 2 on a usage error.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace omada::cli
