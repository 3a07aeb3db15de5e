// UTC instants as seconds since 1970-01-01T00:00:00Z (leap seconds ignored).
#pragma once

#include <exospin/constants.hpp>
#include <exospin/error.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <string_view>

namespace exospin::time {

inline double unix_seconds(int year, unsigned month, unsigned day, int hour = 0, int minute = 0,
                           double second = 0.0) {
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month}, std::chrono::day{day}};
    if (!ymd.ok()) {
        throw Error(ErrorKind::argument, "time", "invalid calendar date");
    }
    const auto days = sys_days{ymd}.time_since_epoch().count();
    return static_cast<double>(days) * constants::solar_day + hour * 3600.0 + minute * 60.0 + second;
}

/// Accepts `YYYY-MM-DD`, `YYYY-MM-DDThh:mm[:ss[.fff]]` with an optional `Z`.
inline double parse_iso8601(std::string_view text) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0;
    double s = 0.0;
    const std::string str(text);
    int consumed = 0;
    const int n = std::sscanf(str.c_str(), "%4d-%2d-%2d%n", &y, &mo, &d, &consumed);
    if (n != 3) {
        throw Error(ErrorKind::parse, "time", "bad ISO-8601 timestamp '" + str + "'");
    }
    std::string rest = str.substr(static_cast<std::size_t>(consumed));
    if (!rest.empty() && (rest[0] == 'T' || rest[0] == ' ')) {
        int used = 0;
        const int m = std::sscanf(rest.c_str() + 1, "%2d:%2d%n", &h, &mi, &used);
        if (m != 2) {
            throw Error(ErrorKind::parse, "time", "bad time of day in '" + str + "'");
        }
        rest = rest.substr(static_cast<std::size_t>(used) + 1);
        if (!rest.empty() && rest[0] == ':') {
            char* end = nullptr;
            s = std::strtod(rest.c_str() + 1, &end);
            rest = std::string(end);
        }
    }
    if (!rest.empty() && rest != "Z") {
        throw Error(ErrorKind::parse, "time", "trailing characters in '" + str + "'");
    }
    if (h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0.0 || s >= 61.0) {
        throw Error(ErrorKind::parse, "time", "time of day out of range in '" + str + "'");
    }
    return unix_seconds(y, static_cast<unsigned>(mo), static_cast<unsigned>(d), h, mi, s);
}

inline std::string format_iso8601(double unix_s) {
    using namespace std::chrono;
    const double days_f = std::floor(unix_s / constants::solar_day);
    const sys_days days{std::chrono::days{static_cast<long>(days_f)}};
    const year_month_day ymd{days};
    double rem = unix_s - days_f * constants::solar_day;
    const int h = static_cast<int>(rem / 3600.0);
    rem -= h * 3600.0;
    const int m = static_cast<int>(rem / 60.0);
    rem -= m * 60.0;
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), h, m,
                  static_cast<int>(std::floor(rem)));
    return buf;
}

inline double julian_date(double unix_s) { return unix_s / constants::solar_day + 2440587.5; }

/// Greenwich mean sidereal angle [rad] (UT1 taken equal to UTC).
inline double gmst(double unix_s) {
    constexpr double j2000_unix = 946728000.0;  // 2000-01-01T12:00:00Z
    const double d = (unix_s - j2000_unix) / constants::solar_day;
    const double whole_turns = 360.0 * (d - std::floor(d));
    const double deg = std::fmod(280.46061837 + 0.98564736629 * d + whole_turns, 360.0);
    return (deg < 0.0 ? deg + 360.0 : deg) * constants::deg2rad;
}

} // namespace exospin::time
