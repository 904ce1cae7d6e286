#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace pvcast {

/// Minutes since 1970-01-01T00:00Z.
using Minutes = std::int64_t;

inline constexpr Minutes kMinutesPerHour = 60;
inline constexpr Minutes kMinutesPerDay = 1440;

/// Accepts `YYYY-MM-DDTHH:MM[:SS][Z]` (a space may replace `T`). Seconds must be
/// zero. Throws ParseError on anything else.
Minutes parse_timestamp(std::string_view text);
/// `YYYY-MM-DDTHH:MM:00Z`.
std::string format_timestamp(Minutes t);

/// Fractional day of year in [0, 366).
double day_of_year(Minutes t);

}  // namespace pvcast
