#include "tlmn/time.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>

#include "tlmn/error.hpp"

namespace tlmn {

using namespace std::chrono;

bool is_leap_year(int year) noexcept {
  return (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
}

int days_in_year(int year) noexcept { return is_leap_year(year) ? 366 : 365; }

Timestamp make_utc(int year, unsigned month, unsigned day, int hour, int minute,
                   int second) {
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                           std::chrono::day{day}};
  if (!ymd.ok()) {
    throw DomainError("invalid calendar date " + std::to_string(year) + "-" +
                      std::to_string(month) + "-" + std::to_string(day));
  }
  if (hour < 0 || hour > 23 || minute < 0 || minute > 59 || second < 0 ||
      second > 60) {
    throw DomainError("invalid clock time");
  }
  return sys_days{ymd} + hours{hour} + minutes{minute} + seconds{second};
}

CivilTime to_civil(Timestamp t) noexcept {
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const hh_mm_ss hms{t - day_point};
  CivilTime c;
  c.year = static_cast<int>(ymd.year());
  c.month = static_cast<unsigned>(ymd.month());
  c.day = static_cast<unsigned>(ymd.day());
  c.hour = static_cast<int>(hms.hours().count());
  c.minute = static_cast<int>(hms.minutes().count());
  c.second = static_cast<int>(hms.seconds().count());
  const sys_days jan1{ymd.year() / January / 1};
  c.day_of_year = static_cast<int>((day_point - jan1).count()) + 1;
  return c;
}

Timestamp to_local(Timestamp utc, double utc_offset_hours) noexcept {
  return utc + seconds{static_cast<long long>(std::lround(utc_offset_hours * 3600.0))};
}

std::string format_iso8601(Timestamp t) {
  const CivilTime c = to_civil(t);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", c.year,
                c.month, c.day, c.hour, c.minute, c.second);
  return buf;
}

namespace {

int read_int(std::string_view text, std::size_t pos, std::size_t len) {
  if (pos + len > text.size()) {
    throw ParseError("truncated timestamp '" + std::string(text) + "'");
  }
  int value = 0;
  const char* first = text.data() + pos;
  const auto [ptr, ec] = std::from_chars(first, first + len, value);
  if (ec != std::errc{} || ptr != first + len) {
    throw ParseError("malformed timestamp '" + std::string(text) + "'");
  }
  return value;
}

void expect(std::string_view text, std::size_t pos, char c) {
  if (pos >= text.size() || text[pos] != c) {
    throw ParseError("malformed timestamp '" + std::string(text) + "'");
  }
}

}  // namespace

Timestamp parse_iso8601(std::string_view text) {
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r')) {
    text.remove_suffix(1);
  }
  if (!text.empty() && text.back() == 'Z') text.remove_suffix(1);

  const int y = read_int(text, 0, 4);
  expect(text, 4, '-');
  const int mo = read_int(text, 5, 2);
  expect(text, 7, '-');
  const int d = read_int(text, 8, 2);
  int h = 0, mi = 0, s = 0;
  if (text.size() > 10) {
    if (text[10] != 'T' && text[10] != ' ') {
      throw ParseError("malformed timestamp '" + std::string(text) + "'");
    }
    h = read_int(text, 11, 2);
    expect(text, 13, ':');
    mi = read_int(text, 14, 2);
    if (text.size() > 16) {
      expect(text, 16, ':');
      s = read_int(text, 17, 2);
      if (text.size() != 19) {
        throw ParseError("malformed timestamp '" + std::string(text) + "'");
      }
    }
  }
  try {
    return make_utc(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), h, mi, s);
  } catch (const DomainError& e) {
    throw ParseError(std::string(e.what()) + " in '" + std::string(text) + "'");
  }
}

}  // namespace tlmn
