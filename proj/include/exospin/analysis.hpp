// Spectra, Allan deviation, lock-in extraction and exclusion limits.
#pragma once

#include <exospin/constants.hpp>
#include <exospin/detail/compensated_sum.hpp>
#include <exospin/detail/csv.hpp>
#include <exospin/detail/svg.hpp>
#include <exospin/error.hpp>
#include <exospin/ssvi_field.hpp>

#include <Eigen/Dense>
#include <fftw3.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace exospin::analysis {

enum class Window { none, hann };

struct Peak {
    double frequency = 0.0;  // Hz
    double amplitude = 0.0;
    std::size_t bin = 0;
    double prominence = 0.0;
};

struct SpectrumOptions {
    Window window = Window::none;
    double min_prominence = 0.01;   // fraction of the largest non-DC amplitude
    double expected_split = 1.0 / constants::sidereal_day;  // Hz
    double min_split = 0.006e-3;    // Hz
    double max_split = 0.0;         // Hz; 0 selects 2 * expected_split
};

struct SpectrumResult {
    std::vector<double> frequency;  // Hz, uniform on [0, 1/(2 dt)]
    std::vector<double> amplitude;  // single-sided sinusoid amplitude
    std::vector<Peak> peaks;        // by decreasing amplitude
    double dt = 0.0;
    std::size_t samples = 0;
    Window window = Window::none;
    double main_line = 0.0;         // df1 [Hz]
    std::optional<double> split;    // df2 [Hz], empty when unresolved
    std::optional<Peak> split_partner;

    double resolution() const { return 1.0 / (static_cast<double>(samples) * dt); }
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

// |X_k| for k = 0 .. n/2 of the real DFT.
inline std::vector<double> dft_magnitudes(std::span<const double> x) {
    const int n = static_cast<int>(x.size());
    std::vector<double> in(x.begin(), x.end());
    std::vector<std::complex<double>> out(static_cast<std::size_t>(n / 2 + 1));
    fftw_plan plan;
    {
        std::lock_guard lock(fftw_planner_mutex());
        plan = fftw_plan_dft_r2c_1d(n, in.data(), reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
    }
    fftw_execute(plan);
    {
        std::lock_guard lock(fftw_planner_mutex());
        fftw_destroy_plan(plan);
    }
    std::vector<double> mag(out.size());
    for (std::size_t k = 0; k < out.size(); ++k) {
        mag[k] = std::abs(out[k]);
    }
    return mag;
}

inline double mean(std::span<const double> x) {
    exospin::detail::CompensatedSum s;
    for (double v : x) s += v;
    return x.empty() ? 0.0 : s.value() / static_cast<double>(x.size());
}

// Topographic prominence of each local maximum (bins 1 .. n-1).
inline std::vector<Peak> find_peaks(const std::vector<double>& f, const std::vector<double>& a, double min_prominence) {
    const std::size_t n = a.size();
    std::vector<Peak> peaks;
    double top = 0.0;
    for (std::size_t k = 1; k < n; ++k) top = std::max(top, a[k]);
    for (std::size_t k = 1; k < n; ++k) {
        const bool left_ok = k == 1 || a[k] > a[k - 1];
        const bool right_ok = k + 1 == n || a[k] >= a[k + 1];
        if (!(left_ok && right_ok)) continue;
        double left_min = a[k];
        for (std::size_t j = k; j-- > 1;) {
            if (a[j] > a[k]) break;
            left_min = std::min(left_min, a[j]);
        }
        double right_min = a[k];
        for (std::size_t j = k + 1; j < n; ++j) {
            if (a[j] > a[k]) break;
            right_min = std::min(right_min, a[j]);
        }
        const double prominence = a[k] - std::max(left_min, right_min);
        if (prominence >= min_prominence * top && a[k] > 0.0) {
            peaks.push_back({f[k], a[k], k, prominence});
        }
    }
    std::stable_sort(peaks.begin(), peaks.end(), [](const Peak& p, const Peak& q) { return p.amplitude > q.amplitude; });
    return peaks;
}

} // namespace detail

/// Checks that `t` is uniformly spaced and returns the step.
inline double uniform_step(std::span<const double> t) {
    if (t.size() < 2) {
        throw Error(ErrorKind::argument, "analysis", "need at least two samples");
    }
    const double dt = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
    for (std::size_t k = 1; k < t.size(); ++k) {
        if (std::abs((t[k] - t[k - 1]) - dt) > 1e-6 * dt) {
            throw Error(ErrorKind::argument, "analysis",
                        "non-uniform sampling at t = " + exospin::detail::format_double(t[k]) + " s");
        }
    }
    if (!(dt > 0.0)) {
        throw Error(ErrorKind::argument, "analysis", "time step must be positive");
    }
    return dt;
}

/// Single-sided amplitude spectrum. Bin k carries 2|X_k|/N (|X_k|/N at DC
/// and Nyquist), divided by the window's coherent gain. Peaks exclude DC.
inline SpectrumResult amplitude_spectrum(std::span<const double> values, double dt,
                                         const SpectrumOptions& opt = {}) {
    const std::size_t n = values.size();
    if (n < 4) {
        throw Error(ErrorKind::argument, "analysis", "spectrum needs at least 4 samples");
    }
    if (!(dt > 0.0)) {
        throw Error(ErrorKind::argument, "analysis", "time step must be positive");
    }
    std::vector<double> x(values.begin(), values.end());
    double gain = 1.0;
    if (opt.window == Window::hann) {
        double wsum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double w = 0.5 - 0.5 * std::cos(constants::two_pi * static_cast<double>(k) / static_cast<double>(n));
            x[k] *= w;
            wsum += w;
        }
        gain = wsum / static_cast<double>(n);
    }
    const auto mag = detail::dft_magnitudes(x);

    SpectrumResult r;
    r.dt = dt;
    r.samples = n;
    r.window = opt.window;
    r.frequency.resize(mag.size());
    r.amplitude.resize(mag.size());
    const double nn = static_cast<double>(n);
    for (std::size_t k = 0; k < mag.size(); ++k) {
        r.frequency[k] = static_cast<double>(k) / (nn * dt);
        const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
        r.amplitude[k] = (edge ? 1.0 : 2.0) * mag[k] / nn / gain;
    }
    r.peaks = detail::find_peaks(r.frequency, r.amplitude, opt.min_prominence);
    if (r.peaks.empty()) {
        return r;
    }
    r.main_line = r.peaks.front().frequency;
    const double max_split = opt.max_split > 0.0 ? opt.max_split : 2.0 * opt.expected_split;
    const bool long_enough = nn * dt >= 2.0 / opt.expected_split;
    if (long_enough) {
        for (std::size_t i = 1; i < r.peaks.size(); ++i) {
            const double sep = std::abs(r.peaks[i].frequency - r.main_line);
            if (sep >= opt.min_split && sep <= max_split) {
                r.split = sep;
                r.split_partner = r.peaks[i];
                break;
            }
        }
    }
    return r;
}

inline SpectrumResult amplitude_spectrum(std::span<const double> times, std::span<const double> values,
                                         const SpectrumOptions& opt = {}) {
    if (times.size() != values.size()) {
        throw Error(ErrorKind::alignment, "analysis", "time and value series differ in length");
    }
    return amplitude_spectrum(values, uniform_step(times), opt);
}

/// One-sided power implied by the amplitudes, excluding DC. Equals the
/// population variance for a rectangular window.
inline double spectral_power(const SpectrumResult& r) {
    exospin::detail::CompensatedSum p;
    for (std::size_t k = 1; k < r.amplitude.size(); ++k) {
        const bool nyquist = r.samples % 2 == 0 && k == r.samples / 2;
        p += nyquist ? r.amplitude[k] * r.amplitude[k] : 0.5 * r.amplitude[k] * r.amplitude[k];
    }
    return p.value();
}

inline double variance(std::span<const double> x) {
    const double m = detail::mean(x);
    exospin::detail::CompensatedSum s;
    for (double v : x) s += (v - m) * (v - m);
    return s.value() / static_cast<double>(x.size());
}

// ---------------------------------------------------------------------------

struct AllanPoint {
    double tau = 0.0;            // s, after snapping
    double requested_tau = 0.0;  // s
    double deviation = 0.0;
    std::size_t clusters = 0;    // independent (non-overlapping) clusters of length tau
    std::size_t terms = 0;       // overlapping differences averaged
    bool snapped = false;
};

struct AllanCurve {
    std::vector<AllanPoint> points;
    double dt = 0.0;
};

/// Overlapping Allan deviation of a series of averages (rates or fields)
/// sampled every dt. tau is snapped down to a multiple of dt.
inline AllanCurve allan_deviation(std::span<const double> y, double dt, std::span<const double> taus) {
    if (!(dt > 0.0)) {
        throw Error(ErrorKind::argument, "analysis", "time step must be positive");
    }
    const std::size_t n = y.size();
    // Phase: running sum of y - y[0] (the estimator ignores offsets; removing
    // it keeps constant series exactly zero).
    std::vector<double> x(n + 1, 0.0);
    exospin::detail::CompensatedSum run;
    for (std::size_t i = 0; i < n; ++i) {
        run += y[i] - y[0];
        x[i + 1] = run.value();
    }
    AllanCurve curve;
    curve.dt = dt;
    for (double tau : taus) {
        const auto m = static_cast<std::size_t>(std::floor(tau / dt * (1.0 + 1e-12)));
        if (m == 0) {
            throw Error(ErrorKind::argument, "analysis", "tau " + exospin::detail::format_double(tau) + " s below dt");
        }
        if (2 * m > n) {
            throw Error(ErrorKind::argument, "analysis",
                        "series too short for tau " + exospin::detail::format_double(tau) + " s");
        }
        AllanPoint p;
        p.requested_tau = tau;
        p.tau = static_cast<double>(m) * dt;
        p.snapped = std::abs(p.tau - tau) > 1e-9 * tau;
        p.clusters = n / m;
        p.terms = n - 2 * m + 1;
        exospin::detail::CompensatedSum s;
        for (std::size_t i = 0; i + 2 * m <= n; ++i) {
            const double d = (x[i + 2 * m] - 2.0 * x[i + m] + x[i]) / static_cast<double>(m);
            s += d * d;
        }
        p.deviation = std::sqrt(s.value() / (2.0 * static_cast<double>(p.terms)));
        curve.points.push_back(p);
    }
    return curve;
}

/// Roughly log-spaced tau values (multiples of dt) up to n dt / 2.
inline std::vector<double> log_taus(std::size_t n, double dt, int per_decade = 8) {
    std::vector<double> out;
    std::size_t last = 0;
    for (int i = 0;; ++i) {
        const auto m = static_cast<std::size_t>(std::floor(std::pow(10.0, static_cast<double>(i) / per_decade)));
        if (2 * m > n) break;
        if (m != last) out.push_back(static_cast<double>(m) * dt);
        last = m;
    }
    return out;
}

/// Least-squares slope of log(deviation) against log(tau).
inline double log_log_slope(const AllanCurve& c) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    double n = 0;
    for (const auto& p : c.points) {
        if (!(p.deviation > 0.0)) continue;
        const double lx = std::log(p.tau), ly = std::log(p.deviation);
        sx += lx, sy += ly, sxx += lx * lx, sxy += lx * ly, n += 1;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

// ---------------------------------------------------------------------------

struct LockinResult {
    double amplitude = 0.0;
    double standard_error = 0.0;
};

/// Least-squares amplitude <s,t>/<t,t> with its white-residual standard error.
inline LockinResult lockin(std::span<const double> series, std::span<const double> tmpl) {
    if (series.size() != tmpl.size()) {
        throw Error(ErrorKind::alignment, "analysis", "series and template differ in length");
    }
    exospin::detail::CompensatedSum st, tt;
    for (std::size_t i = 0; i < series.size(); ++i) {
        st += series[i] * tmpl[i];
        tt += tmpl[i] * tmpl[i];
    }
    if (!(tt.value() > 0.0)) {
        throw Error(ErrorKind::argument, "analysis", "template has zero power");
    }
    LockinResult r;
    r.amplitude = st.value() / tt.value();
    exospin::detail::CompensatedSum rr;
    for (std::size_t i = 0; i < series.size(); ++i) {
        const double res = series[i] - r.amplitude * tmpl[i];
        rr += res * res;
    }
    const double dof = series.size() > 1 ? static_cast<double>(series.size() - 1) : 1.0;
    r.standard_error = std::sqrt(rr.value() / dof / tt.value());
    return r;
}

inline double lockin_amplitude(std::span<const double> series, std::span<const double> tmpl) {
    return lockin(series, tmpl).amplitude;
}

/// Amplitude of the component at `frequency`: least-squares fit of an
/// offset plus cosine and sine, returning sqrt(a^2 + b^2).
inline double tone_amplitude(std::span<const double> values, double dt, double frequency) {
    const auto n = static_cast<Eigen::Index>(values.size());
    if (n < 3) {
        throw Error(ErrorKind::argument, "analysis", "tone fit needs at least 3 samples");
    }
    Eigen::MatrixXd a(n, 3);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double phase = constants::two_pi * frequency * static_cast<double>(i) * dt;
        a(i, 0) = 1.0;
        a(i, 1) = std::cos(phase);
        a(i, 2) = std::sin(phase);
        b(i) = values[static_cast<std::size_t>(i)];
    }
    const Eigen::Vector3d c = a.colPivHouseholderQr().solve(b);
    return std::hypot(c(1), c(2));
}

/// White-noise averaging of independent shots over the campaign.
inline double campaign_sensitivity(double shot_sensitivity, double shot_time, double campaign_days) {
    if (!(shot_sensitivity > 0.0 && shot_time > 0.0 && campaign_days > 0.0)) {
        throw Error(ErrorKind::argument, "analysis", "campaign parameters must be positive");
    }
    return shot_sensitivity / std::sqrt(campaign_days * constants::solar_day / shot_time);
}

// ---------------------------------------------------------------------------

struct ExclusionPoint {
    double lambda = 0.0;      // m
    double amplitude = 0.0;   // orbit-frequency amplitude at f = 1 [T]
    double f_limit = 0.0;
    bool unbounded = false;
};

struct ExclusionCurve {
    std::vector<ExclusionPoint> points;
    std::string kernel_kind;
    double threshold = 0.0;  // T
    double frequency = 0.0;  // Hz
};

/// Coupling limits: f_limit(lambda) = threshold / A(lambda), A the
/// orbit-frequency amplitude of the orbit-normal projection at f = 1.
inline ExclusionCurve exclusion_curve(const earth::SpinSourceGrid& grid, const orbit::OrbitStateSeries& orbit,
                                      const field::InteractionKernel& kernel, std::span<const double> lambdas,
                                      double threshold,
                                      const field::KernelRegistry& registry = field::default_registry()) {
    if (!(threshold > 0.0)) {
        throw Error(ErrorKind::argument, "analysis", "detection threshold must be > 0");
    }
    ExclusionCurve curve;
    curve.kernel_kind = kernel.kind;
    curve.threshold = threshold;
    curve.frequency = 1.0 / orbit.period();
    for (double lambda : lambdas) {
        field::InteractionKernel k = kernel;
        k.coupling = 1.0;
        k.range = lambda;
        const auto series = field::integrate_field(grid, orbit, k, std::nullopt, registry);
        const auto proj = field::project_normal(series, orbit);
        ExclusionPoint p;
        p.lambda = lambda;
        p.amplitude = tone_amplitude(proj, orbit.dt, curve.frequency);
        if (p.amplitude > 0.0) {
            p.f_limit = threshold / p.amplitude;
        } else {
            p.f_limit = std::numeric_limits<double>::infinity();
            p.unbounded = true;
        }
        curve.points.push_back(p);
    }
    return curve;
}

inline std::vector<double> log_space(double lo, double hi, int count) {
    std::vector<double> out;
    for (int i = 0; i < count; ++i) {
        out.push_back(count == 1 ? lo : std::pow(10.0, std::log10(lo) + (std::log10(hi) - std::log10(lo)) * i / (count - 1)));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output

inline std::string spectrum_csv(const SpectrumResult& r) {
    std::string out = "frequency_Hz,amplitude\n";
    for (std::size_t k = 0; k < r.frequency.size(); ++k) {
        const double row[] = {r.frequency[k], r.amplitude[k]};
        exospin::detail::append_row(out, row);
    }
    return out;
}

inline nlohmann::json spectrum_json(const SpectrumResult& r, std::size_t max_peaks = 20) {
    nlohmann::json peaks = nlohmann::json::array();
    for (std::size_t i = 0; i < std::min(max_peaks, r.peaks.size()); ++i) {
        peaks.push_back({{"frequency_Hz", r.peaks[i].frequency},
                         {"amplitude", r.peaks[i].amplitude},
                         {"prominence", r.peaks[i].prominence}});
    }
    nlohmann::json j = {{"samples", r.samples},
                        {"dt_s", r.dt},
                        {"resolution_Hz", r.resolution()},
                        {"window", r.window == Window::hann ? "hann" : "none"},
                        {"df1_Hz", r.main_line},
                        {"split_resolved", r.split.has_value()},
                        {"peaks", peaks}};
    j["df2_Hz"] = r.split ? nlohmann::json(*r.split) : nlohmann::json(nullptr);
    return j;
}

inline std::string allan_csv(const AllanCurve& c) {
    std::string out = "tau_s,adev,clusters,snapped\n";
    for (const auto& p : c.points) {
        const double row[] = {p.tau, p.deviation, static_cast<double>(p.clusters), p.snapped ? 1.0 : 0.0};
        exospin::detail::append_row(out, row);
    }
    return out;
}

inline nlohmann::json allan_json(const AllanCurve& c) {
    nlohmann::json pts = nlohmann::json::array();
    bool any_snapped = false;
    for (const auto& p : c.points) {
        pts.push_back({{"tau_s", p.tau}, {"requested_tau_s", p.requested_tau}, {"adev", p.deviation},
                       {"clusters", p.clusters}, {"snapped", p.snapped}});
        any_snapped = any_snapped || p.snapped;
    }
    const auto best = std::min_element(c.points.begin(), c.points.end(),
                                       [](const AllanPoint& a, const AllanPoint& b) { return a.deviation < b.deviation; });
    nlohmann::json j = {{"dt_s", c.dt}, {"tau_snapped", any_snapped}, {"points", pts}};
    if (best != c.points.end()) {
        j["minimum"] = {{"tau_s", best->tau}, {"adev", best->deviation}};
    }
    return j;
}

inline std::string exclusion_csv(const ExclusionCurve& c) {
    std::string out = "lambda_m,f_limit,amplitude_T\n";
    for (const auto& p : c.points) {
        const double row[] = {p.lambda, p.f_limit, p.amplitude};
        exospin::detail::append_row(out, row);
    }
    return out;
}

inline nlohmann::json exclusion_json(const ExclusionCurve& c) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : c.points) {
        nlohmann::json e = {{"lambda_m", p.lambda}, {"amplitude_T", p.amplitude}, {"unbounded", p.unbounded}};
        e["f_limit"] = p.unbounded ? nlohmann::json(nullptr) : nlohmann::json(p.f_limit);
        pts.push_back(e);
    }
    const auto best = std::min_element(c.points.begin(), c.points.end(),
                                       [](const ExclusionPoint& a, const ExclusionPoint& b) { return a.f_limit < b.f_limit; });
    nlohmann::json j = {{"kernel", c.kernel_kind}, {"threshold_T", c.threshold}, {"frequency_Hz", c.frequency},
                        {"points", pts}};
    if (best != c.points.end()) {
        j["minimum"] = {{"lambda_m", best->lambda}, {"f_limit", best->f_limit}};
    }
    return j;
}

inline std::string spectrum_svg(const SpectrumResult& r, const std::string& title) {
    exospin::detail::PlotSeries s;
    for (std::size_t k = 1; k < r.frequency.size(); ++k) {
        s.x.push_back(r.frequency[k] * 1e3);
        s.y.push_back(r.amplitude[k]);
    }
    return exospin::detail::line_plot({s}, {title, "frequency (mHz)", "amplitude", false, true});
}

inline std::string allan_svg(const AllanCurve& c, const std::string& title) {
    exospin::detail::PlotSeries s;
    for (const auto& p : c.points) {
        s.x.push_back(p.tau);
        s.y.push_back(p.deviation);
    }
    return exospin::detail::line_plot({s}, {title, "tau (s)", "Allan deviation", true, true});
}

inline std::string exclusion_svg(const ExclusionCurve& c, const std::string& title,
                                 const std::vector<exospin::detail::PlotSeries>& overlays = {}) {
    exospin::detail::PlotSeries s;
    s.label = "forecast (" + c.kernel_kind + ")";
    for (const auto& p : c.points) {
        if (p.unbounded) continue;
        s.x.push_back(p.lambda);
        s.y.push_back(p.f_limit);
    }
    std::vector<exospin::detail::PlotSeries> all{s};
    all.insert(all.end(), overlays.begin(), overlays.end());
    return exospin::detail::line_plot(all, {title, "lambda (m)", "coupling limit", true, true});
}

} // namespace exospin::analysis
