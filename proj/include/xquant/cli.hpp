#pragma once

#include <iosfwd>
#include <string>

namespace xquant::cli {

// Exit codes: 0 success, 1 usage error (bad flags, invalid config), 2 data or
// format error (unreadable, malformed or non-finite input files).
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// Parses "0.25", "1/6" or "-3e-2" style numbers; throws ArgumentError otherwise.
double parse_real(const std::string& text);

}  // namespace xquant::cli
