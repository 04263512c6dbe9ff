#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <string_view>

namespace tlmn {

/// UTC instant with one-second resolution.
using Timestamp = std::chrono::sys_seconds;

inline constexpr std::chrono::seconds kHour{3600};

struct CivilTime {
  int year = 1970;
  unsigned month = 1;
  unsigned day = 1;
  int hour = 0;
  int minute = 0;
  int second = 0;
  int day_of_year = 1;
};

bool is_leap_year(int year) noexcept;
int days_in_year(int year) noexcept;

/// Throws DomainError for an invalid calendar date or clock time.
Timestamp make_utc(int year, unsigned month, unsigned day, int hour = 0,
                   int minute = 0, int second = 0);

CivilTime to_civil(Timestamp t) noexcept;

/// Shift a UTC instant to local standard time for calendar extraction.
Timestamp to_local(Timestamp utc, double utc_offset_hours) noexcept;

/// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_iso8601(Timestamp t);

/// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM[:SS][Z]" and the same with a
/// space separator. Throws ParseError.
Timestamp parse_iso8601(std::string_view text);

inline std::int64_t unix_seconds(Timestamp t) noexcept {
  return t.time_since_epoch().count();
}
inline Timestamp from_unix_seconds(std::int64_t s) noexcept {
  return Timestamp{std::chrono::seconds{s}};
}

}  // namespace tlmn
