#pragma once

#include <ostream>

namespace pvcast {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Entry point of the `pvcast` tool: gen-data, train, benchmark and forecast.
/// Returns the process exit code; never throws.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

const char* version_string();

}  // namespace pvcast
