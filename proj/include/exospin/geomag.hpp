// Internal geomagnetic field from a spherical-harmonic (WMM .COF) model.
//
// The scalar potential
//
//   V(r, theta, phi) = a * sum_n (a/r)^(n+1) sum_m (g cos(m phi) + h sin(m phi)) P_n^m(cos theta)
//
// uses Schmidt semi-normalized associated Legendre functions generated by
// forward column recurrence. B = -grad V is returned in tesla in local
// spherical components (radial, colatitudinal, longitudinal).
#pragma once

#include <exospin/constants.hpp>
#include <exospin/error.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <istream>
#include <sstream>
#include <string>
#include <vector>

namespace exospin::geomag {

inline constexpr int max_supported_degree = 12;

/// Gauss coefficients in nanotesla, Schmidt semi-normalized.
class GaussCoefficientSet {
public:
    GaussCoefficientSet() = default;

    explicit GaussCoefficientSet(int max_degree,
                                 double reference_radius = constants::earth_reference_radius)
        : max_degree_(max_degree), reference_radius_(reference_radius) {
        if (max_degree < 1 || max_degree > max_supported_degree) {
            throw Error(ErrorKind::validation, "geomag",
                        "max_degree " + std::to_string(max_degree) + " outside [1, 12]");
        }
        const std::size_t size = index(max_degree, max_degree) + 1;
        g_.assign(size, 0.0);
        h_.assign(size, 0.0);
        g_dot_.assign(size, 0.0);
        h_dot_.assign(size, 0.0);
    }

    static constexpr std::size_t index(int n, int m) noexcept {
        return static_cast<std::size_t>(n * (n + 1) / 2 + m);
    }

    int max_degree() const noexcept { return max_degree_; }
    double reference_radius() const noexcept { return reference_radius_; }

    double g(int n, int m) const { return g_[checked(n, m)]; }
    double h(int n, int m) const { return h_[checked(n, m)]; }
    double g_dot(int n, int m) const { return g_dot_[checked(n, m)]; }
    double h_dot(int n, int m) const { return h_dot_[checked(n, m)]; }

    void set(int n, int m, double g, double h, double g_dot = 0.0, double h_dot = 0.0) {
        const std::size_t k = checked(n, m);
        if (m == 0 && h != 0.0) {
            throw Error(ErrorKind::validation, "geomag",
                        "h[" + std::to_string(n) + "][0] must be zero");
        }
        g_[k] = g;
        h_[k] = h;
        g_dot_[k] = g_dot;
        h_dot_[k] = h_dot;
    }

    double epoch = 2020.0;
    std::string model_name;
    std::string release_date;

private:
    std::size_t checked(int n, int m) const {
        if (n < 1 || n > max_degree_ || m < 0 || m > n) {
            throw Error(ErrorKind::validation, "geomag",
                        "coefficient index (" + std::to_string(n) + ", " + std::to_string(m) +
                            ") out of range for degree " + std::to_string(max_degree_));
        }
        return index(n, m);
    }

    int max_degree_ = 0;
    double reference_radius_ = constants::earth_reference_radius;
    std::vector<double> g_;
    std::vector<double> h_;
    std::vector<double> g_dot_;
    std::vector<double> h_dot_;
};

/// Spherical Earth-fixed position. Angles in radians.
struct GeoPosition {
    double radius = 0.0;
    double colatitude = 0.0;
    double longitude = 0.0;
};

/// Field in local spherical components [T].
struct FieldVector {
    double radial = 0.0;
    double colatitudinal = 0.0;
    double longitudinal = 0.0;

    double magnitude() const noexcept {
        return std::sqrt(radial * radial + colatitudinal * colatitudinal +
                         longitudinal * longitudinal);
    }
};

inline GeoPosition to_geo_position(const Eigen::Vector3d& ecef) {
    const double r = ecef.norm();
    if (!(r > 0.0)) {
        throw Error(ErrorKind::domain, "geomag", "position at the Earth's center");
    }
    const double rho = std::hypot(ecef.x(), ecef.y());
    return {r, std::atan2(rho, ecef.z()), std::atan2(ecef.y(), ecef.x())};
}

inline Eigen::Vector3d to_ecef(const GeoPosition& pos) {
    const double st = std::sin(pos.colatitude);
    return pos.radius * Eigen::Vector3d(st * std::cos(pos.longitude),
                                        st * std::sin(pos.longitude),
                                        std::cos(pos.colatitude));
}

/// Rotates local (r, theta, phi) components into Earth-fixed Cartesian.
inline Eigen::Vector3d to_ecef(const FieldVector& b, const GeoPosition& pos) {
    const double st = std::sin(pos.colatitude);
    const double ct = std::cos(pos.colatitude);
    const double sp = std::sin(pos.longitude);
    const double cp = std::cos(pos.longitude);
    return {b.radial * st * cp + b.colatitudinal * ct * cp - b.longitudinal * sp,
            b.radial * st * sp + b.colatitudinal * ct * sp + b.longitudinal * cp,
            b.radial * ct - b.colatitudinal * st};
}

/// Parses a WMM .COF stream. Rows may carry 4 (n m g h) or 6 columns; the
/// fill line of 9s ends the table, end of stream is accepted as well.
inline GaussCoefficientSet load_coefficients(std::istream& in) {
    struct Row {
        int n, m;
        double g, h, gd, hd;
        int line;
    };

    std::string line;
    int line_no = 0;
    bool have_header = false;
    double epoch = 0.0;
    std::string name;
    std::string date;
    std::vector<Row> rows;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        if (line.find("9999") != std::string::npos &&
            line.find_first_not_of("9 \t\r") == std::string::npos) {
            break;
        }
        std::istringstream fields(line);
        if (!have_header) {
            if (!(fields >> epoch >> name) || std::isdigit(static_cast<unsigned char>(name[0])) ||
                name[0] == '-' || name[0] == '+') {
                throw Error(ErrorKind::format, "geomag",
                            "missing header (epoch, model name, date) at line " +
                                std::to_string(line_no));
            }
            fields >> date;
            have_header = true;
            continue;
        }
        Row row{0, 0, 0.0, 0.0, 0.0, 0.0, line_no};
        if (!(fields >> row.n >> row.m >> row.g >> row.h)) {
            throw Error(ErrorKind::parse, "geomag", "malformed row at line " + std::to_string(line_no));
        }
        if (fields >> row.gd) {
            if (!(fields >> row.hd)) {
                throw Error(ErrorKind::parse, "geomag",
                            "malformed secular-variation columns at line " + std::to_string(line_no));
            }
        }
        std::string extra;
        if (fields >> extra) {
            throw Error(ErrorKind::parse, "geomag",
                        "unexpected trailing field at line " + std::to_string(line_no));
        }
        if (row.n < 1 || row.n > max_supported_degree || row.m < 0 || row.m > row.n) {
            throw Error(ErrorKind::validation, "geomag",
                        "degree/order (" + std::to_string(row.n) + ", " + std::to_string(row.m) +
                            ") out of range at line " + std::to_string(line_no));
        }
        rows.push_back(row);
    }
    if (!have_header) {
        throw Error(ErrorKind::format, "geomag", "missing header");
    }
    if (rows.empty()) {
        throw Error(ErrorKind::format, "geomag", "no coefficient rows");
    }

    int max_degree = 0;
    for (const auto& r : rows) {
        max_degree = std::max(max_degree, r.n);
    }
    GaussCoefficientSet set(max_degree);
    std::vector<bool> seen(GaussCoefficientSet::index(max_degree, max_degree) + 1, false);
    for (const auto& r : rows) {
        const std::size_t k = GaussCoefficientSet::index(r.n, r.m);
        if (seen[k]) {
            throw Error(ErrorKind::validation, "geomag",
                        "duplicate coefficient at line " + std::to_string(r.line));
        }
        seen[k] = true;
        set.set(r.n, r.m, r.g, r.h, r.gd, r.hd);
    }
    set.epoch = epoch;
    set.model_name = name;
    set.release_date = date;
    return set;
}

namespace detail {

// Schmidt semi-normalized P_n^m(cos theta), dP/dtheta and P_n^m / sin(theta)
// (the latter only for m >= 1, finite at the poles).
struct LegendreTable {
    explicit LegendreTable(int max_degree, double colatitude)
        : size(GaussCoefficientSet::index(max_degree, max_degree) + 1),
          p(size, 0.0), dp(size, 0.0), p_over_sin(size, 0.0) {
        const double ct = std::cos(colatitude);
        const double st = std::sin(colatitude);
        using Set = GaussCoefficientSet;

        // Diagonal seeds.
        double pmm = 1.0;
        double dpmm = 0.0;
        double qmm = 0.0;
        for (int m = 0; m <= max_degree; ++m) {
            if (m == 1) {
                pmm = st;
                dpmm = ct;
                qmm = 1.0;
            } else if (m >= 2) {
                const double k = std::sqrt((2.0 * m - 1.0) / (2.0 * m));
                dpmm = k * (ct * pmm + st * dpmm);
                pmm = k * st * pmm;
                qmm = k * st * qmm;
            }
            const std::size_t km = Set::index(m, m);
            p[km] = pmm;
            dp[km] = dpmm;
            p_over_sin[km] = qmm;

            // Column recurrence for n > m.
            double p1 = pmm, dp1 = dpmm, q1 = qmm;    // n-1
            double p2 = 0.0, dp2 = 0.0, q2 = 0.0;     // n-2
            for (int n = m + 1; n <= max_degree; ++n) {
                const double denom = std::sqrt(static_cast<double>(n * n - m * m));
                const double a = (2.0 * n - 1.0) / denom;
                const double b = std::sqrt(static_cast<double>((n - 1) * (n - 1) - m * m)) / denom;
                const double pn = a * ct * p1 - b * p2;
                const double dpn = a * (ct * dp1 - st * p1) - b * dp2;
                const double qn = a * ct * q1 - b * q2;
                const std::size_t k = Set::index(n, m);
                p[k] = pn;
                dp[k] = dpn;
                p_over_sin[k] = qn;
                p2 = p1;
                dp2 = dp1;
                q2 = q1;
                p1 = pn;
                dp1 = dpn;
                q1 = qn;
            }
        }
    }

    std::size_t size;
    std::vector<double> p;
    std::vector<double> dp;
    std::vector<double> p_over_sin;
};

inline void check_position(const GeoPosition& pos) {
    if (!(pos.radius >= constants::core_mantle_boundary)) {
        throw Error(ErrorKind::domain, "geomag",
                    "radius " + std::to_string(pos.radius) +
                        " m is below the core-mantle boundary; the internal expansion is invalid there");
    }
}

inline FieldVector sum_degrees(const GaussCoefficientSet& coeffs, const GeoPosition& pos,
                               int first_degree, int last_degree) {
    const LegendreTable table(last_degree, pos.colatitude);
    const double ratio = coeffs.reference_radius() / pos.radius;

    double br = 0.0, bt = 0.0, bp = 0.0;
    double scale = ratio * ratio;  // (a/r)^(n+2) for n = 0
    for (int n = 1; n <= last_degree; ++n) {
        scale *= ratio;
        if (n < first_degree) {
            continue;
        }
        double sr = 0.0, st = 0.0, sp = 0.0;
        for (int m = 0; m <= n; ++m) {
            const std::size_t k = GaussCoefficientSet::index(n, m);
            const double cm = std::cos(m * pos.longitude);
            const double sm = std::sin(m * pos.longitude);
            const double g = coeffs.g(n, m);
            const double h = coeffs.h(n, m);
            const double gh = g * cm + h * sm;
            sr += gh * table.p[k];
            st += gh * table.dp[k];
            if (m > 0) {
                sp += m * (g * sm - h * cm) * table.p_over_sin[k];
            }
        }
        br += (n + 1) * scale * sr;
        bt -= scale * st;
        bp += scale * sp;
    }
    constexpr double nT = 1e-9;
    return {br * nT, bt * nT, bp * nT};
}

} // namespace detail

/// B = -grad V for degrees 1..truncate_degree. Throws a domain error below the
/// core-mantle boundary.
inline FieldVector evaluate_field(const GaussCoefficientSet& coeffs, const GeoPosition& pos,
                                  int truncate_degree) {
    detail::check_position(pos);
    if (truncate_degree < 1 || truncate_degree > coeffs.max_degree()) {
        throw Error(ErrorKind::argument, "geomag",
                    "truncate_degree " + std::to_string(truncate_degree) + " outside [1, " +
                        std::to_string(coeffs.max_degree()) + "]");
    }
    return detail::sum_degrees(coeffs, pos, 1, truncate_degree);
}

inline FieldVector evaluate_field(const GaussCoefficientSet& coeffs, const GeoPosition& pos) {
    return evaluate_field(coeffs, pos, coeffs.max_degree());
}

/// Contribution of a single degree n.
inline FieldVector evaluate_degree(const GaussCoefficientSet& coeffs, const GeoPosition& pos,
                                   int degree) {
    detail::check_position(pos);
    if (degree < 1 || degree > coeffs.max_degree()) {
        throw Error(ErrorKind::argument, "geomag", "degree out of range");
    }
    return detail::sum_degrees(coeffs, pos, degree, degree);
}

/// Field vector in Earth-fixed Cartesian components at an Earth-fixed point.
inline Eigen::Vector3d field_ecef(const GaussCoefficientSet& coeffs, const Eigen::Vector3d& ecef) {
    const GeoPosition pos = to_geo_position(ecef);
    return to_ecef(evaluate_field(coeffs, pos), pos);
}

} // namespace exospin::geomag
