#pragma once

#include <ostream>

namespace rwl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

// Parses and runs one command line. 0 on success, 1 for usage errors
// (reported before any side effect), 2 for runtime failures.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rwl::cli
