// Spin-spin-velocity pseudomagnetic field of the polarized Earth on an
// orbiting nuclear-spin sensor.
//
// Per source spin, the vs kernel contributes
//
//   dB = -f_s hbar / (4 pi mu_N) (sigma_1 x v) (1/r) exp(-r/lambda)
//
// and the field at the sensor is the sum of dB * rho * dV over the grid.
#pragma once

#include <exospin/constants.hpp>
#include <exospin/detail/compensated_sum.hpp>
#include <exospin/detail/csv.hpp>
#include <exospin/detail/parallel.hpp>
#include <exospin/earth_source.hpp>
#include <exospin/error.hpp>
#include <exospin/orbit.hpp>

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace exospin::field {

inline constexpr double infinite_range = std::numeric_limits<double>::infinity();

struct InteractionKernel {
    std::string kind = "vs";
    double coupling = 1.0;              // f_s (or g for the halo kernel)
    double range = infinite_range;      // lambda [m]
    double nucleon_factor = 1.0;        // fraction of sensor nucleon spin that couples
    double halo_normalization = 1.0;    // [T per (m/s)] for the halo kernel

    void validate() const {
        if (!(range > 0.0)) {
            throw Error(ErrorKind::argument, "ssvi-field", "range must be > 0 or inf");
        }
        if (!std::isfinite(coupling)) {
            throw Error(ErrorKind::argument, "ssvi-field", "coupling must be finite");
        }
    }
};

struct KernelInput {
    Eigen::Vector3d polarization = Eigen::Vector3d::UnitZ();  // sigma_1
    Eigen::Vector3d velocity = Eigen::Vector3d::Zero();       // relative velocity [m/s]
    Eigen::Vector3d separation = Eigen::Vector3d::Zero();     // source -> sensor [m]
    double distance = 0.0;                                    // |separation| [m]
};

/// hbar / (4 pi mu_N) [T m^2 / (m/s)]
inline constexpr double vs_prefactor = constants::hbar / (4.0 * constants::pi * constants::mu_N);

/// Yukawa suppression; exactly 1 for infinite range and 0 far below the
/// representable range.
inline double yukawa_factor(double distance, double range) {
    if (std::isinf(range)) {
        return 1.0;
    }
    const double x = distance / range;
    return x > 700.0 ? 0.0 : std::exp(-x);
}

/// Per-spin field [T] of the vs interaction (multiply by rho dV).
inline Eigen::Vector3d kernel_vs(const KernelInput& in, const InteractionKernel& kernel) {
    if (!(in.distance > 0.0)) {
        throw Error(ErrorKind::domain, "ssvi-field", "zero separation between source and sensor");
    }
    const double scale = -kernel.coupling * kernel.nucleon_factor * vs_prefactor *
                         yukawa_factor(in.distance, kernel.range) / in.distance;
    return scale * in.polarization.cross(in.velocity);
}

/// Axion-halo coupling magnitude: normalization * g * |v|.
inline double kernel_halo(const Eigen::Vector3d& velocity, const InteractionKernel& kernel) {
    return kernel.halo_normalization * kernel.coupling * velocity.norm();
}

using KernelForm = std::function<Eigen::Vector3d(const KernelInput&, const InteractionKernel&)>;

/// Interaction kinds by identifier. "vs" ships with a closed form; the other
/// velocity-dependent potentials have reserved identifiers whose forms must
/// be registered before use.
class KernelRegistry {
public:
    KernelRegistry() {
        forms_["vs"] = kernel_vs;
        for (const char* id : {"v6+7", "v8", "v14", "v15", "v16"}) {
            forms_[id] = nullptr;
        }
    }

    void register_form(const std::string& kind, KernelForm form) {
        if (kind == "vs" || kind == "halo") {
            throw Error(ErrorKind::argument, "ssvi-field", "'" + kind + "' is built in");
        }
        forms_[kind] = std::move(form);
    }

    bool is_known(const std::string& kind) const { return kind == "halo" || forms_.count(kind) > 0; }

    bool has_form(const std::string& kind) const {
        if (kind == "halo") {
            return true;
        }
        const auto it = forms_.find(kind);
        return it != forms_.end() && static_cast<bool>(it->second);
    }

    const KernelForm& form(const std::string& kind) const {
        const auto it = forms_.find(kind);
        if (it == forms_.end()) {
            throw Error(ErrorKind::argument, "ssvi-field", "unknown kernel kind '" + kind + "'");
        }
        if (!it->second) {
            throw Error(ErrorKind::argument, "ssvi-field",
                        "kernel kind '" + kind + "' is reserved but has no registered form");
        }
        return it->second;
    }

    std::vector<std::string> kinds() const {
        std::vector<std::string> out{"halo"};
        for (const auto& [k, f] : forms_) {
            out.push_back(k);
        }
        return out;
    }

private:
    std::map<std::string, KernelForm> forms_;
};

inline const KernelRegistry& default_registry() {
    static const KernelRegistry registry;
    return registry;
}

struct FieldSample {
    double t = 0.0;
    Eigen::Vector3d field = Eigen::Vector3d::Zero();  // ECI [T]
    double projection = 0.0;                          // on the sensor axis [T]
};

struct FieldSeries {
    std::vector<FieldSample> samples;
    InteractionKernel kernel;
    earth::GridResolution resolution;
    std::string orbit_id;
    std::optional<Eigen::Vector3d> sensor_axis;  // ECI unit vector

    std::size_t size() const noexcept { return samples.size(); }

    std::vector<double> times() const {
        std::vector<double> out(samples.size());
        for (std::size_t k = 0; k < samples.size(); ++k) {
            out[k] = samples[k].t;
        }
        return out;
    }

    std::vector<double> projections() const {
        std::vector<double> out(samples.size());
        for (std::size_t k = 0; k < samples.size(); ++k) {
            out[k] = samples[k].projection;
        }
        return out;
    }
};

namespace integrate_detail {

inline constexpr std::size_t cell_block = 512;
inline constexpr std::size_t sample_batch = 32;

// Cell data pre-multiplied for the vs kernel, in Earth-fixed components:
// ws = rho V sigma, wu = rho V sigma x (omega x c).
struct PackedCells {
    std::vector<double> cx, cy, cz, wsx, wsy, wsz, wux, wuy, wuz;
};

inline PackedCells pack(const earth::SpinSourceGrid& grid) {
    PackedCells p;
    const std::size_t n = grid.size();
    for (auto* v : {&p.cx, &p.cy, &p.cz, &p.wsx, &p.wsy, &p.wsz, &p.wux, &p.wuy, &p.wuz}) {
        v->resize(n);
    }
    const Eigen::Vector3d omega = orbit::earth_rotation_vector();
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d c = grid.position(i);
        const double m = grid.density[i] * grid.volume[i];
        const Eigen::Vector3d s = grid.polarization(i);
        const Eigen::Vector3d u = s.cross(omega.cross(c));
        p.cx[i] = c.x();
        p.cy[i] = c.y();
        p.cz[i] = c.z();
        p.wsx[i] = m * s.x();
        p.wsy[i] = m * s.y();
        p.wsz[i] = m * s.z();
        p.wux[i] = m * u.x();
        p.wuy[i] = m * u.y();
        p.wuz[i] = m * u.z();
    }
    return p;
}

// Sums over one block of cells for one sensor position, plain accumulation.
template <bool Finite>
inline std::array<double, 6> block_sums(const PackedCells& p, std::size_t begin, std::size_t end,
                                        const Eigen::Vector3d& sensor, double inv_range) {
    double s0 = 0, s1 = 0, s2 = 0, u0 = 0, u1 = 0, u2 = 0;
    const double px = sensor.x(), py = sensor.y(), pz = sensor.z();
    for (std::size_t i = begin; i < end; ++i) {
        const double dx = px - p.cx[i];
        const double dy = py - p.cy[i];
        const double dz = pz - p.cz[i];
        const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
        double w = 1.0 / r;
        if constexpr (Finite) {
            const double x = r * inv_range;
            w *= x > 700.0 ? 0.0 : std::exp(-x);
        }
        s0 += w * p.wsx[i];
        s1 += w * p.wsy[i];
        s2 += w * p.wsz[i];
        u0 += w * p.wux[i];
        u1 += w * p.wuy[i];
        u2 += w * p.wuz[i];
    }
    return {s0, s1, s2, u0, u1, u2};
}

inline void check_outside(const orbit::OrbitSample& s, double max_radius) {
    if (!(s.position_ecef.norm() > max_radius)) {
        throw Error(ErrorKind::domain, "ssvi-field",
                    "sensor inside the source domain at t = " + exospin::detail::format_double(s.t) + " s");
    }
}

} // namespace integrate_detail

/// Integrates the kernel over the grid at every orbit sample. Summation runs
/// in fixed cell order: plain sums inside fixed-size cell blocks, block
/// partials combined with compensated accumulation. Results are identical
/// for any worker count.
inline FieldSeries integrate_field(const earth::SpinSourceGrid& grid,
                                   const orbit::OrbitStateSeries& orbit,
                                   const InteractionKernel& kernel,
                                   std::optional<Eigen::Vector3d> sensor_axis = std::nullopt,
                                   const KernelRegistry& registry = default_registry()) {
    kernel.validate();
    FieldSeries series;
    series.kernel = kernel;
    series.resolution = grid.resolution;
    series.orbit_id = orbit.orbit_id;
    if (sensor_axis) {
        series.sensor_axis = sensor_axis->normalized();
    }
    series.samples.resize(orbit.size());
    for (std::size_t k = 0; k < orbit.size(); ++k) {
        series.samples[k].t = orbit.samples[k].t;
    }

    auto finish = [&](FieldSample& out, const Eigen::Vector3d& b) {
        out.field = b;
        out.projection = series.sensor_axis ? b.dot(*series.sensor_axis) : 0.0;
    };

    if (kernel.kind == "halo") {
        for (std::size_t k = 0; k < orbit.size(); ++k) {
            const Eigen::Vector3d& v = orbit.samples[k].velocity_eci;
            finish(series.samples[k], kernel.halo_normalization * kernel.coupling * v);
        }
        return series;
    }

    const double max_radius = grid.max_radius();
    for (const auto& s : orbit.samples) {
        integrate_detail::check_outside(s, max_radius);
    }

    if (kernel.kind != "vs") {
        const KernelForm& form = registry.form(kernel.kind);
        exospin::detail::parallel_for(orbit.size(), [&](std::size_t k) {
            const auto& s = orbit.samples[k];
            exospin::detail::CompensatedSum acc[3];
            for (std::size_t i = 0; i < grid.size(); ++i) {
                KernelInput in;
                in.polarization = orbit::ecef_to_eci(grid.polarization(i), s.earth_angle);
                in.velocity = orbit::relative_velocity(s, grid.position(i));
                in.separation = s.position_eci - orbit::ecef_to_eci(grid.position(i), s.earth_angle);
                in.distance = in.separation.norm();
                const Eigen::Vector3d b = form(in, kernel) * (grid.density[i] * grid.volume[i]);
                for (int c = 0; c < 3; ++c) {
                    acc[c] += b[c];
                }
            }
            finish(series.samples[k], {acc[0].value(), acc[1].value(), acc[2].value()});
        });
        return series;
    }

    using namespace integrate_detail;
    const PackedCells cells = pack(grid);
    const std::size_t n_cells = grid.size();
    const std::size_t n_samples = orbit.size();
    const bool finite = !std::isinf(kernel.range);
    const double inv_range = finite ? 1.0 / kernel.range : 0.0;
    const double scale = -kernel.coupling * kernel.nucleon_factor * vs_prefactor;
    const std::size_t batches = (n_samples + sample_batch - 1) / sample_batch;

    exospin::detail::parallel_for(batches, [&](std::size_t batch) {
        const std::size_t k0 = batch * sample_batch;
        const std::size_t k1 = std::min(n_samples, k0 + sample_batch);
        std::vector<std::array<exospin::detail::CompensatedSum, 6>> acc(k1 - k0);
        for (std::size_t b0 = 0; b0 < n_cells; b0 += cell_block) {
            const std::size_t b1 = std::min(n_cells, b0 + cell_block);
            for (std::size_t k = k0; k < k1; ++k) {
                const Eigen::Vector3d& p = orbit.samples[k].position_ecef;
                const auto sums = finite ? block_sums<true>(cells, b0, b1, p, inv_range)
                                         : block_sums<false>(cells, b0, b1, p, inv_range);
                for (int c = 0; c < 6; ++c) {
                    acc[k - k0][static_cast<std::size_t>(c)] += sums[static_cast<std::size_t>(c)];
                }
            }
        }
        for (std::size_t k = k0; k < k1; ++k) {
            const auto& s = orbit.samples[k];
            const auto& a = acc[k - k0];
            const Eigen::Vector3d sigma_sum(a[0].value(), a[1].value(), a[2].value());
            const Eigen::Vector3d rotation_sum(a[3].value(), a[4].value(), a[5].value());
            // Inertial sensor velocity expressed in Earth-fixed components.
            const Eigen::Vector3d v = orbit::eci_to_ecef(s.velocity_eci, s.earth_angle);
            const Eigen::Vector3d b_ecef = scale * (sigma_sum.cross(v) - rotation_sum);
            finish(series.samples[k], orbit::ecef_to_eci(b_ecef, s.earth_angle));
        }
    });
    return series;
}

/// Projection of every sample on the (constant, ECI) orbit-plane normal.
inline std::vector<double> project_normal(const FieldSeries& series,
                                          const orbit::OrbitStateSeries& orbit) {
    const Eigen::Vector3d n = orbit.plane_normal();
    std::vector<double> out(series.size());
    for (std::size_t k = 0; k < series.size(); ++k) {
        out[k] = series.samples[k].field.dot(n);
    }
    return out;
}

/// Share of the total field power carried by the component along `axis`.
/// With `remove_mean` the static part of every component is discarded first,
/// leaving the oscillating field.
inline double axis_power_fraction(const FieldSeries& series, const Eigen::Vector3d& axis,
                                  bool remove_mean) {
    const Eigen::Vector3d n = axis.normalized();
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    if (remove_mean && series.size() > 0) {
        for (const auto& s : series.samples) {
            mean += s.field;
        }
        mean /= static_cast<double>(series.size());
    }
    exospin::detail::CompensatedSum along, total;
    for (const auto& s : series.samples) {
        const Eigen::Vector3d b = s.field - mean;
        const double p = b.dot(n);
        along += p * p;
        total += b.squaredNorm();
    }
    return total.value() > 0.0 ? along.value() / total.value() : 0.0;
}

/// CSV `t_s,Bx_T,By_T,Bz_T,Bproj_T`.
inline std::string field_csv(const FieldSeries& series) {
    std::string out = "t_s,Bx_T,By_T,Bz_T,Bproj_T\n";
    for (const auto& s : series.samples) {
        const double row[] = {s.t, s.field.x(), s.field.y(), s.field.z(), s.projection};
        exospin::detail::append_row(out, row);
    }
    return out;
}

inline FieldSeries load_field_csv(std::istream& in) {
    FieldSeries series;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) {
            if (exospin::detail::trim(line) != "t_s,Bx_T,By_T,Bz_T,Bproj_T") {
                throw Error(ErrorKind::format, "ssvi-field", "unexpected field series header");
            }
            continue;
        }
        if (exospin::detail::trim(line).empty()) {
            continue;
        }
        const auto cols = exospin::detail::split(line);
        double v[5];
        if (cols.size() != 5) {
            throw Error(ErrorKind::parse, "ssvi-field", "expected 5 columns at line " + std::to_string(line_no));
        }
        for (std::size_t i = 0; i < 5; ++i) {
            if (!exospin::detail::parse_double(cols[i], v[i])) {
                throw Error(ErrorKind::parse, "ssvi-field", "bad number at line " + std::to_string(line_no));
            }
        }
        series.samples.push_back({v[0], {v[1], v[2], v[3]}, v[4]});
    }
    if (line_no == 0) {
        throw Error(ErrorKind::format, "ssvi-field", "empty field series");
    }
    return series;
}

} // namespace exospin::field
