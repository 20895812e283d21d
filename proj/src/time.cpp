#include "cifcast/time.hpp"

#include "cifcast/error.hpp"

#include <charconv>
#include <cstdio>

namespace cifcast {

namespace {

int parse_int(std::string_view text, std::size_t pos, std::size_t len, std::string_view whole) {
    int value = 0;
    if (pos + len > text.size())
        throw Error(ErrorCode::ParseError, "truncated date/time: '" + std::string(whole) + "'");
    auto first = text.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, value);
    if (ec != std::errc{} || ptr != first + len)
        throw Error(ErrorCode::ParseError, "bad date/time field in '" + std::string(whole) + "'");
    return value;
}

void expect(std::string_view text, std::size_t pos, char c, std::string_view whole) {
    if (pos >= text.size() || text[pos] != c)
        throw Error(ErrorCode::ParseError, "malformed date/time: '" + std::string(whole) + "'");
}

} // namespace

std::string format_date(Day day) {
    std::chrono::year_month_day ymd{day};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()));
    return buf;
}

std::string format_timestamp(Timestamp t) {
    const Day day = floor_day(t);
    std::chrono::hh_mm_ss hms{t - Timestamp(day)};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02dZ", format_date(day).c_str(),
                  int(hms.hours().count()), int(hms.minutes().count()),
                  int(hms.seconds().count()));
    return buf;
}

Day parse_date(std::string_view text) {
    if (text.size() != 10)
        throw Error(ErrorCode::ParseError, "expected YYYY-MM-DD, got '" + std::string(text) + "'");
    expect(text, 4, '-', text);
    expect(text, 7, '-', text);
    std::chrono::year_month_day ymd{std::chrono::year{parse_int(text, 0, 4, text)},
                                    std::chrono::month{unsigned(parse_int(text, 5, 2, text))},
                                    std::chrono::day{unsigned(parse_int(text, 8, 2, text))}};
    if (!ymd.ok())
        throw Error(ErrorCode::ParseError, "invalid calendar date '" + std::string(text) + "'");
    return Day{ymd};
}

Timestamp parse_timestamp(std::string_view text) {
    if (text.size() < 20)
        throw Error(ErrorCode::ParseError, "expected RFC 3339 timestamp, got '" + std::string(text) + "'");
    const Day day = parse_date(text.substr(0, 10));
    if (text[10] != 'T' && text[10] != 't' && text[10] != ' ')
        throw Error(ErrorCode::ParseError, "malformed timestamp '" + std::string(text) + "'");
    expect(text, 13, ':', text);
    expect(text, 16, ':', text);
    const int hh = parse_int(text, 11, 2, text);
    const int mm = parse_int(text, 14, 2, text);
    const int ss = parse_int(text, 17, 2, text);
    if (hh > 23 || mm > 59 || ss > 60)
        throw Error(ErrorCode::ParseError, "time out of range in '" + std::string(text) + "'");

    std::size_t pos = 19;
    if (pos < text.size() && text[pos] == '.') { // fractional seconds are dropped
        ++pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9')
            ++pos;
    }
    std::chrono::seconds offset{0};
    std::string_view zone = text.substr(pos);
    if (zone == "Z" || zone == "z") {
    } else if (zone.size() == 6 && (zone[0] == '+' || zone[0] == '-') && zone[3] == ':') {
        const int oh = parse_int(zone, 1, 2, text);
        const int om = parse_int(zone, 4, 2, text);
        offset = std::chrono::hours{oh} + std::chrono::minutes{om};
        if (zone[0] == '-')
            offset = -offset;
    } else {
        throw Error(ErrorCode::ParseError, "missing or bad UTC offset in '" + std::string(text) + "'");
    }
    return Timestamp(day) + std::chrono::hours{hh} + std::chrono::minutes{mm} +
           std::chrono::seconds{ss} - offset;
}

int year_of(Day day) { return int(std::chrono::year_month_day{day}.year()); }

} // namespace cifcast
