// Two-line element ingestion and circular two-body propagation.
#pragma once

#include <exospin/constants.hpp>
#include <exospin/detail/csv.hpp>
#include <exospin/detail/parallel.hpp>
#include <exospin/error.hpp>
#include <exospin/time.hpp>

#include <Eigen/Dense>

#include <cctype>
#include <cmath>
#include <istream>
#include <iterator>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace exospin::orbit {

struct TwoLineElement {
    std::string name;
    int norad_id = 0;
    char classification = 'U';
    std::string international_designator;
    double epoch = 0.0;            // UTC, unix seconds
    int epoch_year = 0;
    double epoch_day = 0.0;        // fractional day of year, 1-based
    double mean_motion_dot = 0.0;  // rev/day^2 (already halved, as published)
    double mean_motion_ddot = 0.0; // rev/day^3 (already divided by 6)
    double bstar = 0.0;
    int element_set = 0;
    double inclination = 0.0;      // rad
    double raan = 0.0;             // rad
    double eccentricity = 0.0;
    double arg_perigee = 0.0;      // rad
    double mean_anomaly = 0.0;     // rad
    double mean_motion = 0.0;      // rev/day
    int revolution_number = 0;
};

/// Modulo-10 sum of digits over columns 1-68, '-' counting as 1.
inline int tle_checksum(std::string_view line) {
    int sum = 0;
    for (std::size_t i = 0; i < 68 && i < line.size(); ++i) {
        const char c = line[i];
        if (std::isdigit(static_cast<unsigned char>(c))) {
            sum += c - '0';
        } else if (c == '-') {
            sum += 1;
        }
    }
    return sum % 10;
}

namespace tle_detail {

inline std::string_view strip_right(std::string_view s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == '\n' || s.back() == ' ')) {
        s.remove_suffix(1);
    }
    return s;
}

// Columns are 1-based and inclusive, as in the published layout.
inline std::string_view columns(std::string_view line, int first, int last) {
    return line.substr(static_cast<std::size_t>(first - 1),
                       static_cast<std::size_t>(last - first + 1));
}

inline std::string range_name(int line_index, int first, int last) {
    return "line " + std::to_string(line_index) + " columns " + std::to_string(first) + "-" +
           std::to_string(last);
}

[[noreturn]] inline void field_error(std::string_view field, int line_index, int first, int last) {
    throw Error(ErrorKind::parse, "orbit",
                "unparseable field '" + std::string(field) + "' at " +
                    range_name(line_index, first, last));
}

inline double number(std::string_view line, int line_index, int first, int last) {
    double value = 0.0;
    const auto field = exospin::detail::trim(columns(line, first, last));
    if (!exospin::detail::parse_double(field, value)) {
        field_error(field, line_index, first, last);
    }
    return value;
}

inline int integer(std::string_view line, int line_index, int first, int last) {
    const double v = number(line, line_index, first, last);
    if (v != std::floor(v)) {
        field_error(columns(line, first, last), line_index, first, last);
    }
    return static_cast<int>(v);
}

// Digits with an implied leading decimal point ("0001234" -> 0.0001234).
inline double implied_decimal(std::string_view line, int line_index, int first, int last) {
    const auto field = columns(line, first, last);
    for (char c : field) {
        if (!std::isdigit(static_cast<unsigned char>(c))) {
            field_error(field, line_index, first, last);
        }
    }
    double value = 0.0;
    exospin::detail::parse_double("0." + std::string(field), value);
    return value;
}

// "sddddd-e" fields: mantissa with implied leading decimal and a signed exponent.
inline double implied_exponent(std::string_view line, int line_index, int first, int last) {
    const auto raw = columns(line, first, last);
    auto field = exospin::detail::trim(raw);
    if (field.empty()) {
        return 0.0;
    }
    double sign = 1.0;
    if (field.front() == '-' || field.front() == '+') {
        sign = field.front() == '-' ? -1.0 : 1.0;
        field.remove_prefix(1);
    }
    const auto pos = field.find_last_of("+-");
    if (pos == std::string_view::npos || pos == 0 || pos + 1 >= field.size()) {
        field_error(raw, line_index, first, last);
    }
    double mantissa = 0.0;
    double exponent = 0.0;
    const auto digits = exospin::detail::trim(field.substr(0, pos));
    if (!exospin::detail::parse_double("0." + std::string(digits), mantissa) ||
        !exospin::detail::parse_double(field.substr(pos), exponent)) {
        field_error(raw, line_index, first, last);
    }
    return sign * mantissa * std::pow(10.0, exponent);
}

inline std::string_view checked_line(std::string_view line, int line_index) {
    line = strip_right(line);
    if (line.size() < 69) {
        throw Error(ErrorKind::format, "orbit",
                    "line " + std::to_string(line_index) + " is " + std::to_string(line.size()) +
                        " characters, expected 69");
    }
    if (line[0] != static_cast<char>('0' + line_index)) {
        throw Error(ErrorKind::format, "orbit",
                    "line " + std::to_string(line_index) + " does not start with its line number");
    }
    const int expected = line[68] - '0';
    if (expected < 0 || expected > 9 || tle_checksum(line) != expected) {
        throw Error(ErrorKind::integrity, "orbit",
                    "checksum mismatch on line " + std::to_string(line_index));
    }
    return line;
}

} // namespace tle_detail

/// Parses the two element lines, optionally preceded by a name line.
inline TwoLineElement parse_tle(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        const std::size_t end = text.find('\n', start);
        const auto line = text.substr(start, end == std::string_view::npos ? std::string_view::npos
                                                                           : end - start);
        if (!exospin::detail::trim(line).empty()) {
            lines.push_back(line);
        }
        if (end == std::string_view::npos) {
            break;
        }
        start = end + 1;
    }
    if (lines.size() != 2 && lines.size() != 3) {
        throw Error(ErrorKind::format, "orbit", "expected two element lines and an optional name line");
    }

    TwoLineElement tle;
    if (lines.size() == 3) {
        auto name = exospin::detail::trim(lines[0]);
        if (name.size() >= 2 && name[0] == '0' && name[1] == ' ') {
            name = exospin::detail::trim(name.substr(2));
        }
        tle.name = std::string(name);
        lines.erase(lines.begin());
    }

    using namespace tle_detail;
    const auto l1 = checked_line(lines[0], 1);
    const auto l2 = checked_line(lines[1], 2);

    tle.norad_id = integer(l1, 1, 3, 7);
    tle.classification = l1[7];
    tle.international_designator = std::string(exospin::detail::trim(columns(l1, 10, 17)));
    const int yy = integer(l1, 1, 19, 20);
    tle.epoch_year = yy < 57 ? 2000 + yy : 1900 + yy;
    tle.epoch_day = number(l1, 1, 21, 32);
    tle.epoch = time::unix_seconds(tle.epoch_year, 1, 1) + (tle.epoch_day - 1.0) * constants::solar_day;
    tle.mean_motion_dot = number(l1, 1, 34, 43);
    tle.mean_motion_ddot = implied_exponent(l1, 1, 45, 52);
    tle.bstar = implied_exponent(l1, 1, 54, 61);
    tle.element_set = integer(l1, 1, 65, 68);

    if (integer(l2, 2, 3, 7) != tle.norad_id) {
        throw Error(ErrorKind::validation, "orbit", "catalog numbers of line 1 and 2 differ");
    }
    tle.inclination = number(l2, 2, 9, 16) * constants::deg2rad;
    tle.raan = number(l2, 2, 18, 25) * constants::deg2rad;
    tle.eccentricity = implied_decimal(l2, 2, 27, 33);
    tle.arg_perigee = number(l2, 2, 35, 42) * constants::deg2rad;
    tle.mean_anomaly = number(l2, 2, 44, 51) * constants::deg2rad;
    tle.mean_motion = number(l2, 2, 53, 63);
    tle.revolution_number = integer(l2, 2, 64, 68);

    if (!(tle.inclination >= 0.0 && tle.inclination <= constants::pi)) {
        throw Error(ErrorKind::validation, "orbit", "inclination outside [0, 180] deg");
    }
    if (!(tle.mean_motion > 0.0)) {
        throw Error(ErrorKind::validation, "orbit", "mean motion must be positive");
    }
    return tle;
}

inline TwoLineElement load_tle(std::istream& in) {
    const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return parse_tle(text);
}

/// Mean motion [rev/day] to angular rate [rad/s].
inline double angular_rate(double mean_motion) {
    return constants::two_pi * mean_motion / constants::solar_day;
}

/// Circular-orbit radius from Kepler's third law.
inline double semi_major_axis(double mean_motion) {
    const double n = angular_rate(mean_motion);
    return std::cbrt(constants::GM_earth / (n * n));
}

inline Eigen::Matrix3d rotation_z(double angle) {
    return Eigen::AngleAxisd(angle, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

/// Inertial to Earth-fixed: rotate by minus the Earth rotation angle.
inline Eigen::Vector3d eci_to_ecef(const Eigen::Vector3d& v, double earth_angle) {
    const double c = std::cos(earth_angle);
    const double s = std::sin(earth_angle);
    return {c * v.x() + s * v.y(), -s * v.x() + c * v.y(), v.z()};
}

inline Eigen::Vector3d ecef_to_eci(const Eigen::Vector3d& v, double earth_angle) {
    const double c = std::cos(earth_angle);
    const double s = std::sin(earth_angle);
    return {c * v.x() - s * v.y(), s * v.x() + c * v.y(), v.z()};
}

inline Eigen::Vector3d earth_rotation_vector() { return {0.0, 0.0, constants::omega_earth}; }

struct OrbitSample {
    double t = 0.0;                 // s since series start
    double earth_angle = 0.0;       // Earth rotation angle at t [rad]
    Eigen::Vector3d position_eci = Eigen::Vector3d::Zero();
    Eigen::Vector3d velocity_eci = Eigen::Vector3d::Zero();
    Eigen::Vector3d position_ecef = Eigen::Vector3d::Zero();
    Eigen::Vector3d velocity_ecef = Eigen::Vector3d::Zero();
};

struct OrbitStateSeries {
    std::vector<OrbitSample> samples;
    std::string orbit_id;
    double start_epoch = 0.0;       // UTC unix seconds of t = 0
    double dt = 0.0;
    double radius = 0.0;
    double angular_rate = 0.0;      // rad/s
    double earth_angle_at_start = 0.0;

    std::size_t size() const noexcept { return samples.size(); }
    double period() const noexcept { return constants::two_pi / angular_rate; }

    /// Unit normal of the orbital plane (r x v), constant in ECI.
    Eigen::Vector3d plane_normal() const {
        if (samples.empty()) {
            throw Error(ErrorKind::argument, "orbit", "empty orbit series");
        }
        const Eigen::Vector3d h = samples.front().position_eci.cross(samples.front().velocity_eci);
        if (!(h.norm() > 0.0)) {
            throw Error(ErrorKind::argument, "orbit", "degenerate orbit plane");
        }
        return h.normalized();
    }
};

/// Circular two-body motion at the radius implied by the mean motion. The
/// series covers [start, start + duration) in steps of dt. `start_epoch`
/// defaults to the element epoch; eccentricity is ignored.
inline OrbitStateSeries propagate_circular(const TwoLineElement& tle, double duration, double dt,
                                           std::optional<double> start_epoch = std::nullopt) {
    if (!(dt > 0.0)) {
        throw Error(ErrorKind::argument, "orbit", "dt must be positive");
    }
    if (!(duration >= dt)) {
        throw Error(ErrorKind::argument, "orbit", "duration shorter than one step");
    }
    OrbitStateSeries series;
    series.orbit_id = tle.name.empty() ? std::to_string(tle.norad_id) : tle.name;
    series.start_epoch = start_epoch.value_or(tle.epoch);
    series.dt = dt;
    series.radius = semi_major_axis(tle.mean_motion);
    series.angular_rate = angular_rate(tle.mean_motion);
    series.earth_angle_at_start = time::gmst(series.start_epoch);

    const Eigen::Matrix3d plane =
        rotation_z(tle.raan) * Eigen::AngleAxisd(tle.inclination, Eigen::Vector3d::UnitX()).toRotationMatrix();
    const double u0 = tle.arg_perigee + tle.mean_anomaly +
                      series.angular_rate * (series.start_epoch - tle.epoch);
    const double speed = series.radius * series.angular_rate;
    const auto count = static_cast<std::size_t>(std::floor(duration / dt * (1.0 + 1e-12)));

    series.samples.resize(count);
    exospin::detail::parallel_for(count, [&](std::size_t k) {
        OrbitSample& s = series.samples[k];
        s.t = static_cast<double>(k) * dt;
        const double u = std::fmod(u0 + series.angular_rate * s.t, constants::two_pi);
        s.position_eci = plane * Eigen::Vector3d(series.radius * std::cos(u), series.radius * std::sin(u), 0.0);
        s.velocity_eci = plane * Eigen::Vector3d(-speed * std::sin(u), speed * std::cos(u), 0.0);
        s.earth_angle = std::fmod(series.earth_angle_at_start + constants::omega_earth * s.t,
                                  constants::two_pi);
        s.position_ecef = eci_to_ecef(s.position_eci, s.earth_angle);
        s.velocity_ecef = eci_to_ecef(
            s.velocity_eci - earth_rotation_vector().cross(s.position_eci), s.earth_angle);
    });
    return series;
}

/// Velocity of the sensor relative to a co-rotating Earth-fixed point, in ECI.
inline Eigen::Vector3d relative_velocity(const OrbitSample& sensor,
                                         const Eigen::Vector3d& cell_position_ecef) {
    const Eigen::Vector3d cell_eci = ecef_to_eci(cell_position_ecef, sensor.earth_angle);
    return sensor.velocity_eci - earth_rotation_vector().cross(cell_eci);
}

/// CSV `t,x_eci,y_eci,z_eci,vx,vy,vz,x_ecef,y_ecef,z_ecef`.
inline std::string orbit_csv(const OrbitStateSeries& series) {
    std::string out = "t,x_eci,y_eci,z_eci,vx,vy,vz,x_ecef,y_ecef,z_ecef\n";
    for (const auto& s : series.samples) {
        const double row[] = {s.t,
                              s.position_eci.x(), s.position_eci.y(), s.position_eci.z(),
                              s.velocity_eci.x(), s.velocity_eci.y(), s.velocity_eci.z(),
                              s.position_ecef.x(), s.position_ecef.y(), s.position_ecef.z()};
        exospin::detail::append_row(out, row);
    }
    return out;
}

} // namespace exospin::orbit
