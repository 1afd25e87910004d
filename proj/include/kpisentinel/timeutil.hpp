#pragma once

#include <cstdint>
#include <cstdio>
#include <string>

#include "kpisentinel/util.hpp"

namespace kpisentinel {

/// Hours since the Unix epoch. All telemetry is hour-aligned UTC.
using HourStamp = std::int64_t;

constexpr int kHoursPerWeek = 168;
constexpr int kHoursPerDay = 24;

namespace detail {

// Days-from-civil (proleptic Gregorian), Howard Hinnant's algorithm.
inline std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const int era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

}  // namespace detail

/// Parses an ISO-8601 UTC timestamp, e.g. "2025-01-06T14:00:00Z".
/// Rejects anything not aligned to a whole hour.
inline HourStamp parse_timestamp(const std::string& s) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, se = 0;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%d-%d-%dT%d:%d:%d%c", &y, &mo, &d, &h, &mi, &se, &tail) != 7 ||
      tail != 'Z')
    throw ParseError("invalid timestamp '" + s + "': expected YYYY-MM-DDThh:mm:ssZ");
  if (mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 || mi < 0 || mi > 59 || se < 0 ||
      se > 59)
    throw ParseError("invalid timestamp '" + s + "': field out of range");
  if (mi != 0 || se != 0)
    throw ParseError("timestamp '" + s + "' is not hour-aligned");
  return detail::days_from_civil(y, mo, d) * 24 + h;
}

inline std::string format_timestamp(HourStamp t) {
  std::int64_t days = t / 24;
  int h = static_cast<int>(t % 24);
  if (h < 0) {
    h += 24;
    --days;
  }
  int y, m, d;
  detail::civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:00:00Z", y, m, d, h);
  return buf;
}

/// Hour-of-week in [0, 168); 0 is Monday 00:00 UTC.
inline int hour_of_week(HourStamp t) {
  // Unix epoch fell on a Thursday, 72 hours after the preceding Monday.
  std::int64_t h = (t + 72) % kHoursPerWeek;
  if (h < 0) h += kHoursPerWeek;
  return static_cast<int>(h);
}

}  // namespace kpisentinel
