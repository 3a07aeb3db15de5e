// Polarized geoelectron spin source: radial material profile plus the
// geomagnetic field give a thermal spin polarization density
//
//   rho(r) = rho_e(r) * 2 mu_B |B(r)| / (k_B T(r))
//
// discretized over a spherical-shell grid of Earth-fixed cells.
#pragma once

#include <exospin/constants.hpp>
#include <exospin/detail/compensated_sum.hpp>
#include <exospin/detail/csv.hpp>
#include <exospin/detail/parallel.hpp>
#include <exospin/error.hpp>
#include <exospin/geomag.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <string>
#include <vector>

namespace exospin::earth {

struct Layer {
    double inner_radius = 0.0;  // m
    double outer_radius = 0.0;  // m
    double temperature_inner = 0.0;  // K at inner_radius
    double temperature_outer = 0.0;  // K at outer_radius (equal for a constant layer)
    double electron_density = 0.0;   // unpaired "equivalent Fe2+" electrons per m^3

    double temperature_at(double r) const noexcept {
        const double t = (r - inner_radius) / (outer_radius - inner_radius);
        return temperature_inner + std::clamp(t, 0.0, 1.0) * (temperature_outer - temperature_inner);
    }
};

class RadialProfile {
public:
    RadialProfile() = default;

    explicit RadialProfile(std::vector<Layer> layers) : layers_(std::move(layers)) {
        if (layers_.empty()) {
            throw Error(ErrorKind::validation, "earth-source", "profile has no layers");
        }
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const Layer& l = layers_[i];
            const std::string at = "layer " + std::to_string(i);
            if (!(l.inner_radius >= 0.0 && l.outer_radius > l.inner_radius)) {
                throw Error(ErrorKind::validation, "earth-source", at + ": radii not increasing");
            }
            if (!(l.temperature_inner > 0.0 && l.temperature_outer > 0.0)) {
                throw Error(ErrorKind::validation, "earth-source", at + ": temperature must be > 0");
            }
            if (!(l.electron_density >= 0.0) || !std::isfinite(l.electron_density)) {
                throw Error(ErrorKind::validation, "earth-source", at + ": density must be >= 0");
            }
            if (i > 0 && l.inner_radius != layers_[i - 1].outer_radius) {
                throw Error(ErrorKind::validation, "earth-source",
                            at + ": layers must be contiguous and non-overlapping");
            }
        }
    }

    const std::vector<Layer>& layers() const noexcept { return layers_; }
    double inner_radius() const noexcept { return layers_.front().inner_radius; }
    double outer_radius() const noexcept { return layers_.back().outer_radius; }

    /// Layer containing r; a shared boundary belongs to the outer layer.
    const Layer& layer_at(double r) const {
        if (r < inner_radius() || r > outer_radius()) {
            throw Error(ErrorKind::domain, "earth-source",
                        "radius " + std::to_string(r) + " m outside the profile");
        }
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
            if (r >= it->inner_radius) {
                return *it;
            }
        }
        return layers_.front();
    }

    double temperature(double r) const { return layer_at(r).temperature_at(r); }
    double electron_density(double r) const { return layer_at(r).electron_density; }

private:
    std::vector<Layer> layers_;
};

/// Reads `r_inner_m,r_outer_m,T_K,rho_e_per_m3[,T_outer_K]`. The optional
/// fifth column turns the layer temperature into a linear ramp.
inline RadialProfile load_profile(std::istream& in) {
    std::string line;
    int line_no = 0;
    bool header = false;
    std::vector<Layer> layers;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = exospin::detail::trim(line);
        if (text.empty() || text.front() == '#') {
            continue;
        }
        const auto cols = exospin::detail::split(text);
        if (!header) {
            if (cols.size() < 4 || exospin::detail::trim(cols[0]) != "r_inner_m" ||
                exospin::detail::trim(cols[1]) != "r_outer_m" || exospin::detail::trim(cols[2]) != "T_K" ||
                exospin::detail::trim(cols[3]) != "rho_e_per_m3") {
                throw Error(ErrorKind::format, "earth-source",
                            "expected header r_inner_m,r_outer_m,T_K,rho_e_per_m3");
            }
            header = true;
            continue;
        }
        if (cols.size() != 4 && cols.size() != 5) {
            throw Error(ErrorKind::parse, "earth-source",
                        "expected 4 or 5 columns at line " + std::to_string(line_no));
        }
        double v[5] = {0, 0, 0, 0, 0};
        for (std::size_t i = 0; i < cols.size(); ++i) {
            if (!exospin::detail::parse_double(cols[i], v[i])) {
                throw Error(ErrorKind::parse, "earth-source",
                            "bad number in column " + std::to_string(i + 1) + " at line " +
                                std::to_string(line_no));
            }
        }
        layers.push_back({v[0], v[1], v[2], cols.size() == 5 ? v[4] : v[2], v[3]});
    }
    if (!header) {
        throw Error(ErrorKind::format, "earth-source", "missing profile header");
    }
    return RadialProfile(std::move(layers));
}

/// Thermal polarization: rho_e * 2 mu_B B / (k_B T).
inline double polarized_density(double electron_density, double field_magnitude,
                                 double temperature) {
    if (!(temperature > 0.0)) {
        throw Error(ErrorKind::domain, "earth-source", "temperature must be positive");
    }
    return electron_density * 2.0 * constants::mu_B * field_magnitude /
           (constants::k_B * temperature);
}

struct GridResolution {
    int radial = 32;
    int polar = 64;
    int azimuthal = 128;
};

struct RadiusInterval {
    double inner = constants::core_mantle_boundary;
    double outer = constants::earth_surface_radius;
};

/// Electron spins anti-parallel to the local field by default (negative
/// electron gyromagnetic ratio); `parallel` flips the convention.
enum class PolarizationSign { antiparallel, parallel };

/// Earth-fixed source cells in structure-of-arrays layout.
struct SpinSourceGrid {
    std::vector<double> x, y, z;           // cell centers, ECEF [m]
    std::vector<double> volume;            // [m^3]
    std::vector<double> density;           // polarized spins per m^3
    std::vector<double> sx, sy, sz;        // unit polarization direction, ECEF

    GridResolution resolution;
    RadiusInterval domain;
    std::vector<double> shell_edges;       // radial cell boundaries [m]

    std::size_t size() const noexcept { return x.size(); }

    void resize(std::size_t n) {
        for (auto* v : {&x, &y, &z, &volume, &density, &sx, &sy, &sz}) {
            v->assign(n, 0.0);
        }
    }

    Eigen::Vector3d position(std::size_t i) const { return {x[i], y[i], z[i]}; }
    Eigen::Vector3d polarization(std::size_t i) const { return {sx[i], sy[i], sz[i]}; }

    /// Grid holding exactly one cell.
    static SpinSourceGrid single_cell(const Eigen::Vector3d& position, double volume,
                                      double density, const Eigen::Vector3d& polarization) {
        SpinSourceGrid grid;
        grid.resize(1);
        grid.x[0] = position.x();
        grid.y[0] = position.y();
        grid.z[0] = position.z();
        grid.volume[0] = volume;
        grid.density[0] = density;
        const Eigen::Vector3d s = polarization.normalized();
        grid.sx[0] = s.x();
        grid.sy[0] = s.y();
        grid.sz[0] = s.z();
        grid.resolution = {1, 1, 1};
        const double r = position.norm();
        grid.domain = {r, r};
        return grid;
    }

    double max_radius() const {
        double m = 0.0;
        for (std::size_t i = 0; i < size(); ++i) {
            m = std::max(m, std::sqrt(x[i] * x[i] + y[i] * y[i] + z[i] * z[i]));
        }
        return std::max(m, domain.outer);
    }
};

// Splits [inner, outer] into n shells, equal volume within each profile
// layer, with shell counts per layer proportional to layer volume (at least
// one each). No shell straddles a layer boundary.
inline std::vector<double> radial_shell_edges(const RadialProfile& profile, RadiusInterval domain,
                                              int n) {
    std::vector<double> breaks{domain.inner};
    for (const Layer& l : profile.layers()) {
        if (l.outer_radius > domain.inner && l.outer_radius < domain.outer) {
            breaks.push_back(l.outer_radius);
        }
    }
    breaks.push_back(domain.outer);
    const std::size_t pieces = breaks.size() - 1;
    if (static_cast<std::size_t>(n) < pieces) {
        throw Error(ErrorKind::argument, "earth-source",
                    "radial resolution smaller than the number of layers in the domain");
    }

    auto cube = [](double r) { return r * r * r; };
    std::vector<double> vol(pieces);
    for (std::size_t i = 0; i < pieces; ++i) {
        vol[i] = cube(breaks[i + 1]) - cube(breaks[i]);
    }
    const double total = std::accumulate(vol.begin(), vol.end(), 0.0);

    // Largest-remainder apportionment over the shells left after the minimum of one.
    std::vector<int> count(pieces, 1);
    const int spare = n - static_cast<int>(pieces);
    std::vector<double> remainder(pieces);
    int assigned = 0;
    for (std::size_t i = 0; i < pieces; ++i) {
        const double share = spare * vol[i] / total;
        const int whole = static_cast<int>(std::floor(share));
        count[i] += whole;
        assigned += whole;
        remainder[i] = share - whole;
    }
    std::vector<std::size_t> order(pieces);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (int k = 0; k < spare - assigned; ++k) {
        ++count[order[static_cast<std::size_t>(k)]];
    }

    std::vector<double> edges{domain.inner};
    for (std::size_t i = 0; i < pieces; ++i) {
        const double u0 = cube(breaks[i]);
        for (int k = 1; k <= count[i]; ++k) {
            edges.push_back(k == count[i] ? breaks[i + 1]
                                          : std::cbrt(u0 + vol[i] * k / count[i]));
        }
    }
    return edges;
}

/// Tiles the domain with cells that are midpoints in (r^3, cos theta, phi), so
/// every cell of a shell has the same volume.
inline SpinSourceGrid build_grid(const RadialProfile& profile,
                                 const geomag::GaussCoefficientSet& coeffs,
                                 GridResolution resolution, RadiusInterval domain = {},
                                 PolarizationSign sign = PolarizationSign::antiparallel) {
    if (domain.inner < constants::core_mantle_boundary) {
        throw Error(ErrorKind::domain, "earth-source",
                    "domain extends below the core-mantle boundary");
    }
    if (!(domain.outer > domain.inner)) {
        throw Error(ErrorKind::argument, "earth-source", "empty radius interval");
    }
    if (domain.inner < profile.inner_radius() || domain.outer > profile.outer_radius()) {
        throw Error(ErrorKind::validation, "earth-source", "profile does not cover the domain");
    }
    if (resolution.radial < 4 || resolution.polar < 8 || resolution.azimuthal < 16) {
        throw Error(ErrorKind::argument, "earth-source", "resolution below (4, 8, 16)");
    }

    SpinSourceGrid grid;
    grid.resolution = resolution;
    grid.domain = domain;
    grid.shell_edges = radial_shell_edges(profile, domain, resolution.radial);

    const auto nr = static_cast<std::size_t>(resolution.radial);
    const auto nt = static_cast<std::size_t>(resolution.polar);
    const auto np = static_cast<std::size_t>(resolution.azimuthal);
    grid.resize(nr * nt * np);

    const double dcos = 2.0 / static_cast<double>(nt);
    const double dphi = constants::two_pi / static_cast<double>(np);
    const double orientation = sign == PolarizationSign::antiparallel ? -1.0 : 1.0;

    exospin::detail::parallel_for(nr * nt, [&](std::size_t shell_band) {
        const std::size_t ir = shell_band / nt;
        const std::size_t it = shell_band % nt;
        const double r0 = grid.shell_edges[ir];
        const double r1 = grid.shell_edges[ir + 1];
        const double r = std::cbrt(0.5 * (r0 * r0 * r0 + r1 * r1 * r1));
        const double cos_theta = 1.0 - (static_cast<double>(it) + 0.5) * dcos;
        const double theta = std::acos(cos_theta);
        const double cell_volume = (r1 * r1 * r1 - r0 * r0 * r0) / 3.0 * dcos * dphi;

        const Layer& layer = profile.layer_at(r);
        const double temperature = layer.temperature_at(r);

        for (std::size_t ip = 0; ip < np; ++ip) {
            const double phi = -constants::pi + (static_cast<double>(ip) + 0.5) * dphi;
            const geomag::GeoPosition pos{r, theta, phi};
            const Eigen::Vector3d center = geomag::to_ecef(pos);
            const Eigen::Vector3d b = geomag::to_ecef(geomag::evaluate_field(coeffs, pos), pos);
            const double bmag = b.norm();

            const std::size_t i = (ir * nt + it) * np + ip;
            grid.x[i] = center.x();
            grid.y[i] = center.y();
            grid.z[i] = center.z();
            grid.volume[i] = cell_volume;
            grid.density[i] = polarized_density(layer.electron_density, bmag, temperature);
            const Eigen::Vector3d s = bmag > 0.0 ? Eigen::Vector3d(orientation * b / bmag)
                                                 : Eigen::Vector3d::UnitZ();
            grid.sx[i] = s.x();
            grid.sy[i] = s.y();
            grid.sz[i] = s.z();
        }
    });
    return grid;
}

/// Compensated sum of rho * V over all cells, in cell order.
inline double total_polarized_spins(const SpinSourceGrid& grid) {
    exospin::detail::CompensatedSum sum;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        sum += grid.density[i] * grid.volume[i];
    }
    return sum.value();
}

/// CSV dump `x_m,y_m,z_m,volume_m3,rho_per_m3,sx,sy,sz`.
inline std::string grid_csv(const SpinSourceGrid& grid) {
    std::string out = "x_m,y_m,z_m,volume_m3,rho_per_m3,sx,sy,sz\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double row[] = {grid.x[i], grid.y[i], grid.z[i], grid.volume[i],
                              grid.density[i], grid.sx[i], grid.sy[i], grid.sz[i]};
        exospin::detail::append_row(out, row);
    }
    return out;
}

struct DensityMapPoint {
    double latitude_deg;
    double longitude_deg;
    double density;
};

/// Polarized spin density on a sphere of the given radius (a Fig.-1 style map).
inline std::vector<DensityMapPoint> density_map(const RadialProfile& profile,
                                                const geomag::GaussCoefficientSet& coeffs,
                                                double radius, int n_lat, int n_lon) {
    const double rho_e = profile.electron_density(radius);
    const double temperature = profile.temperature(radius);
    std::vector<DensityMapPoint> out;
    out.reserve(static_cast<std::size_t>(n_lat * n_lon));
    for (int i = 0; i < n_lat; ++i) {
        const double lat = -90.0 + (i + 0.5) * 180.0 / n_lat;
        for (int j = 0; j < n_lon; ++j) {
            const double lon = -180.0 + (j + 0.5) * 360.0 / n_lon;
            const geomag::GeoPosition pos{radius, (90.0 - lat) * constants::deg2rad,
                                          lon * constants::deg2rad};
            const double b = geomag::evaluate_field(coeffs, pos).magnitude();
            out.push_back({lat, lon, polarized_density(rho_e, b, temperature)});
        }
    }
    return out;
}

} // namespace exospin::earth
