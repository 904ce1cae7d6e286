#include "pvcast/timeutil.hpp"

#include <charconv>
#include <chrono>
#include <cstdio>

#include "pvcast/errors.hpp"

namespace pvcast {

namespace {

int read_int(std::string_view s, std::size_t pos, std::size_t len) {
  if (pos + len > s.size()) throw ParseError("timestamp too short: '" + std::string(s) + "'");
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, v);
  if (ec != std::errc() || ptr != s.data() + pos + len) {
    throw ParseError("bad timestamp field in '" + std::string(s) + "'");
  }
  return v;
}

void expect(std::string_view s, std::size_t pos, std::string_view options) {
  if (pos >= s.size() || options.find(s[pos]) == std::string_view::npos) {
    throw ParseError("malformed timestamp '" + std::string(s) + "'");
  }
}

}  // namespace

Minutes parse_timestamp(std::string_view s) {
  using namespace std::chrono;
  const int y = read_int(s, 0, 4);
  expect(s, 4, "-");
  const int mo = read_int(s, 5, 2);
  expect(s, 7, "-");
  const int d = read_int(s, 8, 2);
  expect(s, 10, "T ");
  const int hh = read_int(s, 11, 2);
  expect(s, 13, ":");
  const int mm = read_int(s, 14, 2);
  std::size_t pos = 16;
  if (pos < s.size() && s[pos] == ':') {
    if (read_int(s, pos + 1, 2) != 0) {
      throw ParseError("timestamp '" + std::string(s) + "' is not on a whole minute");
    }
    pos += 3;
  }
  if (pos < s.size() && s[pos] == 'Z') ++pos;
  if (pos != s.size()) throw ParseError("trailing characters in timestamp '" + std::string(s) + "'");
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || hh > 23 || mm > 59 || hh < 0 || mm < 0) {
    throw ParseError("invalid date/time in '" + std::string(s) + "'");
  }
  const auto days = sys_days(ymd).time_since_epoch().count();
  return static_cast<Minutes>(days) * kMinutesPerDay + hh * 60 + mm;
}

std::string format_timestamp(Minutes t) {
  using namespace std::chrono;
  Minutes days = t / kMinutesPerDay;
  Minutes rem = t % kMinutesPerDay;
  if (rem < 0) {
    rem += kMinutesPerDay;
    --days;
  }
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:00Z", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 60), static_cast<int>(rem % 60));
  return buf;
}

double day_of_year(Minutes t) {
  using namespace std::chrono;
  const Minutes days = t >= 0 ? t / kMinutesPerDay : (t - kMinutesPerDay + 1) / kMinutesPerDay;
  const year_month_day ymd{sys_days{std::chrono::days{days}}};
  const sys_days jan1{ymd.year() / January / 1};
  const Minutes since = t - static_cast<Minutes>(jan1.time_since_epoch().count()) * kMinutesPerDay;
  return static_cast<double>(since) / static_cast<double>(kMinutesPerDay);
}

}  // namespace pvcast
