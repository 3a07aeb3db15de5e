// Dual noble-gas comagnetometer: forward precession model, pseudofield
// extraction and noise budget.
//
//   Omega_i = 2 pi gamma_i (B0 + B_gmf) - Omega_rot + mu_N B_pseu / (hbar F_i)
//
// gamma is in Hz/T, Omega in rad/s.
#pragma once

#include <exospin/constants.hpp>
#include <exospin/detail/csv.hpp>
#include <exospin/detail/parallel.hpp>
#include <exospin/error.hpp>
#include <exospin/geomag.hpp>
#include <exospin/orbit.hpp>
#include <exospin/ssvi_field.hpp>

#include <Eigen/Dense>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <istream>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace exospin::sensor {

struct SpeciesParams {
    std::string name;
    double gamma = 0.0;  // Hz/T, signed
    double F = 0.5;
};

inline SpeciesParams xe129() { return {"129Xe", -11.86e6, 0.5}; }
inline SpeciesParams xe131() { return {"131Xe", 3.52e6, 1.5}; }

using SpeciesPair = std::pair<SpeciesParams, SpeciesParams>;

inline SpeciesPair xenon_pair() { return {xe129(), xe131()}; }

inline constexpr double deg_per_s = constants::deg2rad;  // rad/s per deg/s

struct SensorConfig {
    double B0 = 1.0e-6;                                // T
    Eigen::Vector3d sensitive_axis = Eigen::Vector3d::UnitZ();  // ECI unit vector
    double shield_factor = 1.0e8;
    double calibration_error = 1.0e-4;                 // epsilon_R
    double reference_time = 1165.0;                    // s
    double gyro_noise = 2.0e-6 * deg_per_s;            // rad/s at reference_time
    double vibration_rate = 0.005 * deg_per_s;         // rad/s, platform rotation level
    double laser_coefficient = 19.0e-18;               // T per ppm
    double laser_stability_ppm = 190.0;
    double shot_sensitivity = 4.3e-15;                 // T at reference_time
    double ambient_peak = 20.0e-6;                     // T, unshielded
    bool readout_noise = true;                         // inject laser and shot noise
    std::uint64_t rng_seed = 0;

    void validate() const {
        auto fail = [](const std::string& what) { throw Error(ErrorKind::validation, "comagnetometer", what); };
        if (!(shield_factor >= 1.0)) fail("shield_factor must be >= 1");
        if (!(calibration_error >= 0.0)) fail("calibration_error must be >= 0");
        if (std::abs(sensitive_axis.norm() - 1.0) > 1e-9) fail("sensitive_axis must be a unit vector");
        if (!(reference_time > 0.0)) fail("reference_time must be > 0");
        for (double v : {gyro_noise, vibration_rate, laser_coefficient, laser_stability_ppm, shot_sensitivity,
                         ambient_peak}) {
            if (!(v >= 0.0) || !std::isfinite(v)) fail("noise levels must be finite and >= 0");
        }
        if (!std::isfinite(B0)) fail("B0 must be finite");
    }
};

struct PrecessionSample {
    double t = 0.0;
    double omega1 = 0.0;          // rad/s
    double omega2 = 0.0;          // rad/s
    double omega_rot_true = 0.0;  // rad/s
    double omega_rot_meas = 0.0;  // rad/s
    double b_gmf = 0.0;           // shielded ambient on the sensitive axis [T]
};

struct PrecessionRecord {
    std::vector<PrecessionSample> samples;
    std::size_t size() const noexcept { return samples.size(); }
};

/// Signed ratio R = gamma_1 / gamma_2.
inline double gyromagnetic_ratio(const SpeciesPair& species) {
    if (species.first.gamma == 0.0 || species.second.gamma == 0.0) {
        throw Error(ErrorKind::argument, "comagnetometer", "gamma must be nonzero");
    }
    return species.first.gamma / species.second.gamma;
}

namespace detail {

inline double denominator(double R, const SpeciesPair& s) {
    const double d = constants::mu_N * (R * s.first.F - s.second.F);
    if (d == 0.0) {
        throw Error(ErrorKind::domain, "comagnetometer", "degenerate species pair: R F1 - F2 = 0");
    }
    return d;
}

// Independent standard normal draw for (seed, sample, stream).
inline double gaussian(std::uint64_t seed, std::size_t index, unsigned stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32), stream};
    std::mt19937_64 rng(seq);
    return std::normal_distribution<double>(0.0, 1.0)(rng);
}

enum Stream : unsigned { vibration = 1, gyro = 2, laser = 3, shot = 4 };

} // namespace detail

/// Field error from an uncorrected rotation: hbar F1 F2 (1 - R) Omega / (mu_N (R F1 - F2)).
inline double rotation_equivalent_field(double omega_rot, const SpeciesPair& species) {
    const double R = gyromagnetic_ratio(species);
    return constants::hbar * species.first.F * species.second.F * (1.0 - R) * omega_rot /
           detail::denominator(R, species);
}

/// Per-sample standard deviation of white noise that averages to `level`
/// over `reference_time`.
inline double per_sample_sigma(double level, double reference_time, double dt) {
    return level * std::sqrt(reference_time / dt);
}

/// Platform rotation about the sensitive axis: seeded white noise at
/// cfg.vibration_rate.
inline std::vector<double> vibration_series(std::size_t n, const SensorConfig& cfg) {
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        out[k] = cfg.vibration_rate * detail::gaussian(cfg.rng_seed, k, detail::vibration);
    }
    return out;
}

/// Unshielded geomagnetic field along the orbit, projected on an ECI axis.
inline std::vector<double> ambient_projection(const geomag::GaussCoefficientSet& coeffs,
                                              const orbit::OrbitStateSeries& orbit,
                                              const Eigen::Vector3d& axis) {
    std::vector<double> out(orbit.size());
    exospin::detail::parallel_for(orbit.size(), [&](std::size_t k) {
        const auto& s = orbit.samples[k];
        const Eigen::Vector3d b = orbit::ecef_to_eci(geomag::field_ecef(coeffs, s.position_ecef), s.earth_angle);
        out[k] = b.dot(axis);
    });
    return out;
}

/// Precession frequencies of both species. `ambient` is the raw field on
/// the sensitive axis (shielding applied here), `rotation` the true
/// platform rate. Gyro readout and, if enabled, laser and shot noise are
/// drawn per sample from the seed, so the record is independent of thread
/// count.
inline PrecessionRecord forward_model(const field::FieldSeries& field, const std::vector<double>& ambient,
                                      const std::vector<double>& rotation, const SensorConfig& cfg,
                                      const SpeciesPair& species = xenon_pair()) {
    cfg.validate();
    const std::size_t n = field.size();
    if (ambient.size() != n || rotation.size() != n) {
        throw Error(ErrorKind::alignment, "comagnetometer",
                    "field, ambient and rotation series differ in length (" + std::to_string(n) + ", " +
                        std::to_string(ambient.size()) + ", " + std::to_string(rotation.size()) + ")");
    }
    gyromagnetic_ratio(species);
    const double dt = n > 1 ? field.samples[1].t - field.samples[0].t : cfg.reference_time;
    for (std::size_t k = 1; k < n; ++k) {
        if (!(field.samples[k].t > field.samples[k - 1].t)) {
            throw Error(ErrorKind::alignment, "comagnetometer", "sample times not strictly increasing");
        }
    }
    const double gyro_sigma = per_sample_sigma(cfg.gyro_noise, cfg.reference_time, dt);
    const double laser_sigma =
        per_sample_sigma(cfg.laser_coefficient * cfg.laser_stability_ppm, cfg.reference_time, dt);
    const double shot_sigma = per_sample_sigma(cfg.shot_sensitivity, cfg.reference_time, dt);
    const auto& [s1, s2] = species;

    PrecessionRecord record;
    record.samples.resize(n);
    exospin::detail::parallel_for(n, [&](std::size_t k) {
        auto& out = record.samples[k];
        out.t = field.samples[k].t;
        out.b_gmf = ambient[k] / cfg.shield_factor;
        out.omega_rot_true = rotation[k];
        out.omega_rot_meas = rotation[k];
        if (gyro_sigma > 0.0) {
            out.omega_rot_meas += gyro_sigma * detail::gaussian(cfg.rng_seed, k, detail::gyro);
        }
        double b_pseu = field.samples[k].field.dot(cfg.sensitive_axis);
        if (cfg.readout_noise) {
            b_pseu += laser_sigma * detail::gaussian(cfg.rng_seed, k, detail::laser) +
                      shot_sigma * detail::gaussian(cfg.rng_seed, k, detail::shot);
        }
        // Extended precision so each frequency is rounded once.
        using ld = long double;
        const ld b = static_cast<ld>(cfg.B0) + static_cast<ld>(out.b_gmf);
        const ld coupling = static_cast<ld>(constants::mu_N) * b_pseu / static_cast<ld>(constants::hbar);
        const ld two_pi = static_cast<ld>(constants::two_pi);
        out.omega1 = static_cast<double>(two_pi * s1.gamma * b - rotation[k] + coupling / s1.F);
        out.omega2 = static_cast<double>(two_pi * s2.gamma * b - rotation[k] + coupling / s2.F);
    });
    return record;
}

/// Inverts the precession record for B_pseu on the sensitive axis using
/// R' = R (1 + epsilon_R) and the measured rotation rate.
///
/// The magnitudes |Omega_1| - |R' Omega_2| are formed as s (Omega_1 - R' Omega_2)
/// with s = sign(gamma_1), the sign both terms take for a positive bias
/// field. Undoing that sign makes the extraction the exact inverse of the
/// forward model for either sign convention.
inline std::vector<double> extract_pseudofield(const PrecessionRecord& record, const SpeciesPair& species,
                                               const SensorConfig& cfg) {
    const double R = gyromagnetic_ratio(species) * (1.0 + cfg.calibration_error);
    const double scale = constants::hbar * species.first.F * species.second.F / detail::denominator(R, species);
    const double s = species.first.gamma < 0.0 ? -1.0 : 1.0;
    // Omega_1 - R' Omega_2 = (gamma_2 Omega_1 - gamma_1 (1 + eps) Omega_2) / gamma_2, formed in
    // extended precision: the bias terms cancel to many digits.
    using ld = long double;
    const ld g1 = static_cast<ld>(species.first.gamma) * (1.0L + static_cast<ld>(cfg.calibration_error));
    const ld g2 = species.second.gamma;
    std::vector<double> out(record.size());
    for (std::size_t k = 0; k < record.size(); ++k) {
        const auto& p = record.samples[k];
        const ld magnitudes = s * (g2 * p.omega1 - g1 * p.omega2) / g2;
        out[k] = static_cast<double>(scale * (-s * magnitudes - (1.0L - R) * p.omega_rot_meas));
    }
    return out;
}

struct NoiseBudget {
    double laser = 0.0;
    double gyro_residual = 0.0;
    double shield_leakage = 0.0;
    double shot = 0.0;
    double total = 0.0;

    nlohmann::json to_json() const {
        return {{"laser_T", laser},
                {"gyro_residual_T", gyro_residual},
                {"shield_leakage_T", shield_leakage},
                {"shot_T", shot},
                {"total_T", total}};
    }
};

/// Equivalent-field noise items at the reference integration time.
inline NoiseBudget noise_budget(const SensorConfig& cfg, const SpeciesPair& species = xenon_pair()) {
    cfg.validate();
    NoiseBudget b;
    b.laser = cfg.laser_coefficient * cfg.laser_stability_ppm;
    b.gyro_residual = std::abs(rotation_equivalent_field(cfg.gyro_noise, species));
    b.shield_leakage = cfg.ambient_peak / cfg.shield_factor * cfg.calibration_error;
    b.shot = cfg.shot_sensitivity;
    b.total = std::sqrt(b.laser * b.laser + b.gyro_residual * b.gyro_residual +
                        b.shield_leakage * b.shield_leakage + b.shot * b.shot);
    return b;
}

/// CSV `t_s,omega1_rad_s,omega2_rad_s,omega_rot_true,omega_rot_meas,b_gmf_T`.
inline std::string precession_csv(const PrecessionRecord& record) {
    std::string out = "t_s,omega1_rad_s,omega2_rad_s,omega_rot_true,omega_rot_meas,b_gmf_T\n";
    for (const auto& s : record.samples) {
        const double row[] = {s.t, s.omega1, s.omega2, s.omega_rot_true, s.omega_rot_meas, s.b_gmf};
        exospin::detail::append_row(out, row);
    }
    return out;
}

inline PrecessionRecord load_precession_csv(std::istream& in) {
    PrecessionRecord record;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1) {
            if (exospin::detail::trim(line) != "t_s,omega1_rad_s,omega2_rad_s,omega_rot_true,omega_rot_meas,b_gmf_T") {
                throw Error(ErrorKind::format, "comagnetometer", "unexpected precession record header");
            }
            continue;
        }
        if (exospin::detail::trim(line).empty()) {
            continue;
        }
        const auto cols = exospin::detail::split(line);
        double v[6];
        if (cols.size() != 6) {
            throw Error(ErrorKind::parse, "comagnetometer", "expected 6 columns at line " + std::to_string(line_no));
        }
        for (std::size_t i = 0; i < 6; ++i) {
            if (!exospin::detail::parse_double(cols[i], v[i])) {
                throw Error(ErrorKind::parse, "comagnetometer", "bad number at line " + std::to_string(line_no));
            }
        }
        record.samples.push_back({v[0], v[1], v[2], v[3], v[4], v[5]});
    }
    if (line_no == 0) {
        throw Error(ErrorKind::format, "comagnetometer", "empty precession record");
    }
    return record;
}

} // namespace exospin::sensor
