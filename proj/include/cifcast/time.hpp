#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace cifcast {

using Timestamp = std::chrono::sys_seconds;
using Day = std::chrono::sys_days;

inline Day floor_day(Timestamp t) { return std::chrono::floor<std::chrono::days>(t); }

/// Seconds elapsed since 00:00 UTC of the same day.
inline std::chrono::seconds time_of_day(Timestamp t) { return t - Timestamp(floor_day(t)); }

std::string format_date(Day day);                // YYYY-MM-DD
std::string format_timestamp(Timestamp t);       // RFC 3339, always "Z"
Day parse_date(std::string_view text);           // throws Error(ParseError)
Timestamp parse_timestamp(std::string_view text); // accepts Z or +00:00 / -hh:mm offsets

int year_of(Day day);

} // namespace cifcast
