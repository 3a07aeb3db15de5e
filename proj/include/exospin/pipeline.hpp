// Configuration-driven mission pipeline: config validation, the run
// commands and artifact bookkeeping.
#pragma once

#include <exospin/analysis.hpp>
#include <exospin/comagnetometer.hpp>
#include <exospin/earth_source.hpp>
#include <exospin/error.hpp>
#include <exospin/geomag.hpp>
#include <exospin/orbit.hpp>
#include <exospin/ssvi_field.hpp>
#include <exospin/time.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <exospin/detail/csv.hpp>
#include <exospin/detail/svg.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace exospin::pipeline {

namespace fs = std::filesystem;

/// Coupling that puts the mission peak projection near 20 pT with the
/// shipped profile and grid.
inline constexpr double terrestrial_bound_coupling = 3.7e-41;

struct PipelineConfig {
    fs::path config_file;

    // [paths]
    fs::path coefficients, profile, tle;
    std::optional<fs::path> overlay;

    // [window]
    std::optional<double> start;  // unix s; element epoch when unset
    double duration = 12.0 * constants::solar_day;
    double dt = 60.0;

    // [grid]
    earth::GridResolution resolution{32, 64, 128};
    earth::RadiusInterval domain{};
    earth::PolarizationSign polarization = earth::PolarizationSign::antiparallel;

    // [kernel]
    field::InteractionKernel kernel{"vs", terrestrial_bound_coupling};

    // [sensor]
    sensor::SensorConfig sensor;
    std::optional<Eigen::Vector3d> axis;  // ECI; orbit normal when unset

    // [analysis]
    std::vector<double> taus;  // empty: log-spaced
    analysis::Window window = analysis::Window::none;
    std::string spectrum_source = "field";
    double min_prominence = 0.01;
    double min_split = 0.006e-3;
    double lambda_min = 1.0e4, lambda_max = 1.0e10;
    int lambda_points = 13;
    std::optional<double> threshold;
    double campaign_days = 100.0;
    double shot_time = 1165.0;
    double reference_coupling = terrestrial_bound_coupling;
    earth::GridResolution exclusion_resolution{32, 64, 128};
    double exclusion_dt = 60.0;

    // [output]
    fs::path output_dir = "out";
    bool plots = true;

    // [run]
    std::uint64_t rng_seed = 0;
    unsigned threads = 0;

    std::string echo;  // resolved config as INI text
};

namespace detail {

struct KeySpec {
    const char* section;
    const char* key;
    const char* fallback;  // nullptr: required
    const char* note;
};

inline const std::vector<KeySpec>& key_specs() {
    static const std::vector<KeySpec> specs{
        {"paths", "coefficients", nullptr, "Gauss coefficient file (.COF)"},
        {"paths", "profile", nullptr, "radial temperature/density profile CSV"},
        {"paths", "tle", nullptr, "two-line element file"},
        {"paths", "overlay", "", "optional CSV lambda_m,f_limit plotted with the exclusion curve"},
        {"window", "start", "", "ISO-8601 UTC; empty = element epoch"},
        {"window", "end", "", "ISO-8601 UTC; overrides duration_days"},
        {"window", "duration_days", "12", "> 0"},
        {"window", "dt_s", "60", "> 0"},
        {"grid", "n_radial", "32", ">= 4"},
        {"grid", "n_polar", "64", ">= 8"},
        {"grid", "n_azimuth", "128", ">= 16"},
        {"grid", "inner_radius_m", "3480000", ">= core-mantle boundary"},
        {"grid", "outer_radius_m", "6371000", "> inner_radius_m"},
        {"grid", "polarization", "antiparallel", "antiparallel | parallel"},
        {"kernel", "kind", "vs", "vs | halo | registered identifier"},
        {"kernel", "f", "3.7e-41", "coupling; default puts the mission peak near 20 pT"},
        {"kernel", "lambda_m", "inf", "> 0 or inf"},
        {"kernel", "nucleon_factor", "1", "> 0"},
        {"kernel", "halo_normalization", "1", "T per (m/s), halo kernel only"},
        {"sensor", "B0_T", "1e-6", "bias field"},
        {"sensor", "axis", "normal", "normal | x,y,z (ECI)"},
        {"sensor", "shield_factor", "1e8", ">= 1"},
        {"sensor", "calibration_error", "1e-4", ">= 0"},
        {"sensor", "reference_time_s", "1165", "> 0"},
        {"sensor", "gyro_noise_deg_s", "2e-6", ">= 0, at reference_time_s"},
        {"sensor", "vibration_deg_s", "0.005", ">= 0"},
        {"sensor", "laser_coefficient_T_per_ppm", "19e-18", ">= 0"},
        {"sensor", "laser_stability_ppm", "190", ">= 0"},
        {"sensor", "shot_sensitivity_T", "4.3e-15", ">= 0, at reference_time_s"},
        {"sensor", "ambient_peak_T", "20e-6", ">= 0"},
        {"sensor", "readout_noise", "true", "true | false"},
        {"analysis", "taus_s", "", "comma list; empty = log-spaced"},
        {"analysis", "window", "none", "none | hann"},
        {"analysis", "spectrum_source", "field", "field | sensor"},
        {"analysis", "min_prominence", "0.01", "[0, 1)"},
        {"analysis", "min_split_Hz", "6e-6", "> 0"},
        {"analysis", "lambda_min_m", "1e4", "> 0"},
        {"analysis", "lambda_max_m", "1e10", ">= lambda_min_m"},
        {"analysis", "lambda_points", "13", ">= 1"},
        {"analysis", "threshold_T", "", "> 0; empty = campaign sensitivity"},
        {"analysis", "campaign_days", "100", "> 0"},
        {"analysis", "shot_time_s", "1165", "> 0"},
        {"analysis", "reference_coupling", "3.7e-41", "> 0; compared with the forecast limits"},
        {"analysis", "exclusion_grid", "", "n_radial,n_polar,n_azimuth; empty = [grid]"},
        {"analysis", "exclusion_dt_s", "", "> 0; empty = [window] dt_s"},
        {"output", "dir", "out", "relative to the config file"},
        {"output", "plots", "true", "true | false"},
        {"run", "rng_seed", "0", "unsigned integer"},
        {"run", "threads", "0", "0 = all cores"},
    };
    return specs;
}

inline Error config_error(const std::string& what) { return Error(ErrorKind::config, "pipeline", what); }

class Reader {
public:
    Reader(const boost::property_tree::ptree& tree, fs::path base) : tree_(tree), base_(std::move(base)) {}

    std::string raw(const std::string& section, const std::string& key) {
        const KeySpec* spec = find(section, key);
        std::string value;
        bool from_file = false;
        if (const auto s = tree_.get_child_optional(section)) {
            if (const auto v = s->get_optional<std::string>(key)) {
                value = std::string(exospin::detail::trim(*v));
                from_file = true;
            }
        }
        if (!from_file) {
            if (spec->fallback == nullptr) {
                throw config_error("missing required key [" + section + "] " + key);
            }
            value = spec->fallback;
        }
        auto& list = resolved_[section];
        std::erase_if(list, [&](const auto& e) { return std::get<0>(e) == key; });
        list.emplace_back(key, value, from_file);
        return value;
    }

    double number(const std::string& section, const std::string& key, double lo, double hi, bool lo_open = false) {
        const std::string text = raw(section, key);
        double v = 0.0;
        if (!exospin::detail::parse_double(text, v)) {
            throw config_error("[" + section + "] " + key + " = '" + text + "' is not a number");
        }
        check_range(section, key, v, lo, hi, lo_open);
        return v;
    }

    std::optional<double> optional_number(const std::string& section, const std::string& key, double lo, double hi,
                                          bool lo_open = false) {
        const std::string text = raw(section, key);
        if (text.empty()) return std::nullopt;
        double v = 0.0;
        if (!exospin::detail::parse_double(text, v)) {
            throw config_error("[" + section + "] " + key + " = '" + text + "' is not a number");
        }
        check_range(section, key, v, lo, hi, lo_open);
        return v;
    }

    int integer(const std::string& section, const std::string& key, int lo, int hi) {
        const std::string text = raw(section, key);
        int v = 0;
        const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
        if (ec != std::errc() || p != text.data() + text.size()) {
            throw config_error("[" + section + "] " + key + " = '" + text + "' is not an integer");
        }
        if (v < lo || v > hi) {
            throw config_error("[" + section + "] " + key + " = " + text + " out of range [" + std::to_string(lo) +
                               ", " + std::to_string(hi) + "]");
        }
        return v;
    }

    bool boolean(const std::string& section, const std::string& key) {
        const std::string text = raw(section, key);
        if (text == "true" || text == "1" || text == "yes") return true;
        if (text == "false" || text == "0" || text == "no") return false;
        throw config_error("[" + section + "] " + key + " = '" + text + "' must be true or false");
    }

    std::string choice(const std::string& section, const std::string& key, const std::vector<std::string>& allowed) {
        const std::string text = raw(section, key);
        if (std::find(allowed.begin(), allowed.end(), text) == allowed.end()) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : " | ") + a;
            throw config_error("[" + section + "] " + key + " = '" + text + "' must be one of " + list);
        }
        return text;
    }

    fs::path path(const std::string& section, const std::string& key, bool must_exist) {
        const std::string text = raw(section, key);
        fs::path p = text;
        if (p.is_relative()) p = base_ / p;
        p = p.lexically_normal();
        if (must_exist && !fs::exists(p)) {
            throw config_error("[" + section + "] " + key + ": file not found: " + p.string());
        }
        annotate(section, key, p.string());
        return p;
    }

    // Rewrites the value recorded for the echo.
    void annotate(const std::string& section, const std::string& key, const std::string& value) {
        for (auto& e : resolved_[section]) {
            if (std::get<0>(e) == key) std::get<1>(e) = value;
        }
    }

    std::string echo() const {
        std::string out = "; Resolved configuration. Keys not set in the file are tagged as defaults.\n";
        std::string current;
        for (const auto& spec : key_specs()) {
            const auto it = resolved_.find(spec.section);
            if (it == resolved_.end()) continue;
            for (const auto& [k, v, from_file] : it->second) {
                if (k != spec.key) continue;
                if (current != spec.section) {
                    out += "\n[" + std::string(spec.section) + "]\n";
                    current = spec.section;
                }
                out += "; " + std::string(spec.note) + (from_file ? "" : " [default]") + "\n" + k + " = " + v + "\n";
            }
        }
        return out;
    }

private:
    static const KeySpec* find(const std::string& section, const std::string& key) {
        for (const auto& s : key_specs()) {
            if (section == s.section && key == s.key) return &s;
        }
        throw Error(ErrorKind::argument, "pipeline", "internal: undeclared key " + section + "." + key);
    }

    static void check_range(const std::string& section, const std::string& key, double v, double lo, double hi,
                            bool lo_open) {
        const bool ok = (lo_open ? v > lo : v >= lo) && v <= hi;
        if (!ok) {
            throw config_error("[" + section + "] " + key + " = " + exospin::detail::format_double(v) +
                               " out of range " + (lo_open ? "(" : "[") + exospin::detail::format_double(lo) + ", " +
                               exospin::detail::format_double(hi) + "]");
        }
    }

    const boost::property_tree::ptree& tree_;
    fs::path base_;
    std::map<std::string, std::vector<std::tuple<std::string, std::string, bool>>> resolved_;
};

inline std::vector<double> number_list(const std::string& text, const std::string& where) {
    std::vector<double> out;
    if (exospin::detail::trim(text).empty()) return out;
    for (auto part : exospin::detail::split(text)) {
        double v = 0.0;
        if (!exospin::detail::parse_double(part, v)) {
            throw config_error(where + ": '" + std::string(part) + "' is not a number");
        }
        out.push_back(v);
    }
    return out;
}

} // namespace detail

/// Reads, defaults and range-checks a pipeline config file.
inline PipelineConfig validate_config(const fs::path& file) {
    namespace pt = boost::property_tree;
    if (!fs::exists(file)) {
        throw detail::config_error("config file not found: " + file.string());
    }
    pt::ptree tree;
    try {
        pt::read_ini(file.string(), tree);
    } catch (const pt::ini_parser_error& e) {
        throw detail::config_error(std::string("cannot parse config: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw detail::config_error("key '" + section + "' outside any section");
        }
        for (const auto& [key, value] : body) {
            const bool known = std::any_of(detail::key_specs().begin(), detail::key_specs().end(),
                                           [&](const detail::KeySpec& s) { return section == s.section && key == s.key; });
            if (!known) {
                throw detail::config_error("unknown key [" + section + "] " + key);
            }
        }
    }

    PipelineConfig cfg;
    cfg.config_file = fs::absolute(file).lexically_normal();
    detail::Reader r(tree, cfg.config_file.parent_path());
    const double inf = std::numeric_limits<double>::infinity();

    cfg.coefficients = r.path("paths", "coefficients", true);
    cfg.profile = r.path("paths", "profile", true);
    cfg.tle = r.path("paths", "tle", true);
    if (!r.raw("paths", "overlay").empty()) {
        // Re-read through path() for resolution and existence.
        cfg.overlay = r.path("paths", "overlay", true);
    }

    auto parse_time = [&](const std::string& key) -> std::optional<double> {
        const std::string text = r.raw("window", key);
        if (text.empty()) return std::nullopt;
        try {
            return time::parse_iso8601(text);
        } catch (const Error& e) {
            throw detail::config_error("[window] " + key + ": " + e.what());
        }
    };
    cfg.start = parse_time("start");
    const auto end = parse_time("end");
    const double days = r.number("window", "duration_days", 0.0, 3650.0, true);
    cfg.dt = r.number("window", "dt_s", 0.0, 86400.0, true);
    if (end) {
        double start = 0.0;
        if (cfg.start) {
            start = *cfg.start;
        } else {
            std::ifstream in(cfg.tle);
            start = orbit::load_tle(in).epoch;
        }
        if (!(*end > start)) {
            throw detail::config_error("[window] end must be after start");
        }
        cfg.duration = *end - start;
    } else {
        cfg.duration = days * constants::solar_day;
    }
    if (cfg.duration < cfg.dt) {
        throw detail::config_error("[window] duration shorter than dt_s");
    }

    cfg.resolution.radial = r.integer("grid", "n_radial", 4, 4096);
    cfg.resolution.polar = r.integer("grid", "n_polar", 8, 8192);
    cfg.resolution.azimuthal = r.integer("grid", "n_azimuth", 16, 16384);
    cfg.domain.inner = r.number("grid", "inner_radius_m", constants::core_mantle_boundary, constants::earth_surface_radius);
    cfg.domain.outer = r.number("grid", "outer_radius_m", cfg.domain.inner, 1e8, true);
    cfg.polarization = r.choice("grid", "polarization", {"antiparallel", "parallel"}) == "parallel"
                           ? earth::PolarizationSign::parallel
                           : earth::PolarizationSign::antiparallel;

    cfg.kernel.kind = r.raw("kernel", "kind");
    if (!field::default_registry().is_known(cfg.kernel.kind)) {
        throw detail::config_error("[kernel] kind = '" + cfg.kernel.kind + "' is not a known kernel");
    }
    if (!field::default_registry().has_form(cfg.kernel.kind)) {
        throw detail::config_error("[kernel] kind = '" + cfg.kernel.kind + "' is reserved but has no shipped form");
    }
    cfg.kernel.coupling = r.number("kernel", "f", -1e300, 1e300);
    cfg.kernel.range = r.number("kernel", "lambda_m", 0.0, inf, true);
    cfg.kernel.nucleon_factor = r.number("kernel", "nucleon_factor", 0.0, 1e300, true);
    cfg.kernel.halo_normalization = r.number("kernel", "halo_normalization", 0.0, 1e300);

    auto& s = cfg.sensor;
    s.B0 = r.number("sensor", "B0_T", -1.0, 1.0);
    const std::string axis = r.raw("sensor", "axis");
    if (axis != "normal") {
        const auto v = detail::number_list(axis, "[sensor] axis");
        if (v.size() != 3 || !(Eigen::Vector3d(v[0], v[1], v[2]).norm() > 0.0)) {
            throw detail::config_error("[sensor] axis must be 'normal' or three components x,y,z");
        }
        cfg.axis = Eigen::Vector3d(v[0], v[1], v[2]).normalized();
    }
    s.shield_factor = r.number("sensor", "shield_factor", 1.0, 1e300);
    s.calibration_error = r.number("sensor", "calibration_error", 0.0, 1.0);
    s.reference_time = r.number("sensor", "reference_time_s", 0.0, 1e12, true);
    s.gyro_noise = r.number("sensor", "gyro_noise_deg_s", 0.0, 1e6) * sensor::deg_per_s;
    s.vibration_rate = r.number("sensor", "vibration_deg_s", 0.0, 1e6) * sensor::deg_per_s;
    s.laser_coefficient = r.number("sensor", "laser_coefficient_T_per_ppm", 0.0, 1.0);
    s.laser_stability_ppm = r.number("sensor", "laser_stability_ppm", 0.0, 1e6);
    s.shot_sensitivity = r.number("sensor", "shot_sensitivity_T", 0.0, 1.0);
    s.ambient_peak = r.number("sensor", "ambient_peak_T", 0.0, 1.0);
    s.readout_noise = r.boolean("sensor", "readout_noise");

    cfg.taus = detail::number_list(r.raw("analysis", "taus_s"), "[analysis] taus_s");
    for (double t : cfg.taus) {
        if (!(t > 0.0)) throw detail::config_error("[analysis] taus_s values must be > 0");
    }
    cfg.window = r.choice("analysis", "window", {"none", "hann"}) == "hann" ? analysis::Window::hann
                                                                            : analysis::Window::none;
    cfg.spectrum_source = r.choice("analysis", "spectrum_source", {"field", "sensor"});
    cfg.min_prominence = r.number("analysis", "min_prominence", 0.0, 1.0);
    cfg.min_split = r.number("analysis", "min_split_Hz", 0.0, 1.0, true);
    cfg.lambda_min = r.number("analysis", "lambda_min_m", 0.0, inf, true);
    cfg.lambda_max = r.number("analysis", "lambda_max_m", cfg.lambda_min, inf);
    cfg.lambda_points = r.integer("analysis", "lambda_points", 1, 1000);
    cfg.threshold = r.optional_number("analysis", "threshold_T", 0.0, 1.0, true);
    cfg.campaign_days = r.number("analysis", "campaign_days", 0.0, 1e6, true);
    cfg.shot_time = r.number("analysis", "shot_time_s", 0.0, 1e9, true);
    cfg.reference_coupling = r.number("analysis", "reference_coupling", 0.0, 1e300, true);
    const auto eg = detail::number_list(r.raw("analysis", "exclusion_grid"), "[analysis] exclusion_grid");
    if (eg.empty()) {
        cfg.exclusion_resolution = cfg.resolution;
    } else if (eg.size() == 3 && eg[0] >= 4 && eg[1] >= 8 && eg[2] >= 16) {
        cfg.exclusion_resolution = {static_cast<int>(eg[0]), static_cast<int>(eg[1]), static_cast<int>(eg[2])};
    } else {
        throw detail::config_error("[analysis] exclusion_grid must be three integers >= 4,8,16");
    }
    cfg.exclusion_dt = r.optional_number("analysis", "exclusion_dt_s", 0.0, 86400.0, true).value_or(cfg.dt);

    cfg.output_dir = r.path("output", "dir", false);
    cfg.plots = r.boolean("output", "plots");
    cfg.rng_seed = static_cast<std::uint64_t>(r.number("run", "rng_seed", 0.0, 9.0e15));
    cfg.threads = static_cast<unsigned>(r.integer("run", "threads", 0, 4096));
    s.rng_seed = cfg.rng_seed;
    cfg.echo = r.echo();
    return cfg;
}

/// Command-line overrides, reflected in the resolved-config echo.
inline void apply_overrides(PipelineConfig& cfg, std::optional<unsigned> threads, std::optional<std::uint64_t> seed) {
    auto replace = [&](const std::string& key, const std::string& value) {
        const std::string marker = "\n" + key + " = ";
        const auto at = cfg.echo.find(marker);
        if (at == std::string::npos) return;
        const auto end = cfg.echo.find('\n', at + 1);
        cfg.echo.replace(at + 1, end - at - 1, key + " = " + value);
    };
    // Thread count never changes results, so the echo keeps the file value.
    if (threads) cfg.threads = *threads;
    if (seed) {
        cfg.rng_seed = *seed;
        cfg.sensor.rng_seed = *seed;
        replace("rng_seed", std::to_string(*seed));
    }
}

// ---------------------------------------------------------------------------

inline std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error(ErrorKind::io, "pipeline", "SHA-256 failed");
    }
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::io, "pipeline", "cannot read " + p.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes artifacts atomically and removes everything it wrote if the run
/// is abandoned.
class ArtifactWriter {
public:
    explicit ArtifactWriter(fs::path dir) : dir_(std::move(dir)) {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec || !fs::is_directory(dir_)) {
            throw Error(ErrorKind::io, "pipeline", "cannot create output directory " + dir_.string());
        }
    }

    const fs::path& dir() const { return dir_; }

    void write(const std::string& name, const std::string& content) {
        const fs::path target = dir_ / name;
        const fs::path tmp = dir_ / (name + ".partial");
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw Error(ErrorKind::io, "pipeline", "cannot write " + tmp.string());
            out << content;
            if (!out) throw Error(ErrorKind::io, "pipeline", "write failed for " + tmp.string());
        }
        std::error_code ec;
        fs::rename(tmp, target, ec);
        if (ec) {
            fs::remove(tmp, ec);
            throw Error(ErrorKind::io, "pipeline", "cannot move " + target.string() + " into place");
        }
        written_.push_back(target);
    }

    void write_json(const std::string& name, const nlohmann::json& j) { write(name, j.dump(2) + "\n"); }

    /// Hashes every artifact in the directory into manifest.json.
    void finish() {
        nlohmann::json entries = nlohmann::json::array();
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir_)) {
            if (!e.is_regular_file()) continue;
            const auto name = e.path().filename().string();
            if (name == "manifest.json" || name.ends_with(".partial")) continue;
            files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            const std::string data = read_file(f);
            entries.push_back({{"file", f.filename().string()}, {"sha256", sha256_hex(data)}, {"bytes", data.size()}});
        }
        write_json("manifest.json", {{"artifacts", entries}});
        committed_ = true;
    }

    ~ArtifactWriter() {
        if (committed_) return;
        std::error_code ec;
        for (const auto& p : written_) fs::remove(p, ec);
        for (const auto& e : fs::directory_iterator(dir_, ec)) {
            if (e.path().filename().string().ends_with(".partial")) fs::remove(e.path(), ec);
        }
    }

private:
    fs::path dir_;
    std::vector<fs::path> written_;
    bool committed_ = false;
};

// ---------------------------------------------------------------------------

struct Inputs {
    geomag::GaussCoefficientSet coefficients;
    earth::RadialProfile profile;
    orbit::TwoLineElement tle;
};

inline Inputs load_inputs(const PipelineConfig& cfg) {
    auto open = [](const fs::path& p) {
        std::ifstream in(p);
        if (!in) throw Error(ErrorKind::io, "pipeline", "cannot open " + p.string());
        return in;
    };
    auto c = open(cfg.coefficients);
    auto p = open(cfg.profile);
    auto t = open(cfg.tle);
    return {geomag::load_coefficients(c), earth::load_profile(p), orbit::load_tle(t)};
}

inline orbit::OrbitStateSeries mission_orbit(const PipelineConfig& cfg, const Inputs& in, double dt) {
    return orbit::propagate_circular(in.tle, cfg.duration, dt, cfg.start);
}

inline Eigen::Vector3d sensor_axis(const PipelineConfig& cfg, const orbit::OrbitStateSeries& orb) {
    return cfg.axis ? *cfg.axis : orb.plane_normal();
}

// Identifies the inputs a cached intermediate depends on.
inline std::string fingerprint(const PipelineConfig& cfg, const std::vector<std::string>& sections) {
    std::string keep;
    std::string current;
    std::istringstream in(cfg.echo);
    std::string line;
    bool active = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line[0] == '[') {
            current = line.substr(1, line.find(']') - 1);
            active = std::find(sections.begin(), sections.end(), current) != sections.end();
        }
        if (active && !line.starts_with("threads ")) keep += line + "\n";
    }
    return sha256_hex(keep);
}

inline bool cached(const fs::path& data, const fs::path& summary, const std::string& key) {
    if (!fs::exists(data) || !fs::exists(summary)) return false;
    try {
        const auto j = nlohmann::json::parse(read_file(summary));
        return j.value("inputs_sha256", "") == key;
    } catch (const nlohmann::json::exception&) {
        return false;
    }
}

inline double peak_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

inline std::string time_plot(const std::vector<double>& t, const std::vector<double>& v, double scale,
                             const std::string& title, const std::string& y_label) {
    exospin::detail::PlotSeries s;
    for (std::size_t i = 0; i < t.size(); ++i) {
        s.x.push_back(t[i] / constants::solar_day);
        s.y.push_back(v[i] * scale);
    }
    return exospin::detail::line_plot({s}, {title, "time (days)", y_label});
}

inline std::string window_iso(const PipelineConfig& cfg, const orbit::OrbitStateSeries& orb) {
    return time::format_iso8601(orb.start_epoch) + "/" + time::format_iso8601(orb.start_epoch + cfg.duration);
}

/// Integrates the field (or reuses field.csv when its inputs are unchanged).
inline field::FieldSeries field_stage(const PipelineConfig& cfg, const Inputs& in, const orbit::OrbitStateSeries& orb,
                                      ArtifactWriter& out) {
    const std::string key = fingerprint(cfg, {"paths", "window", "grid", "kernel", "sensor"});
    const fs::path csv = out.dir() / "field.csv";
    const fs::path summary = out.dir() / "field_summary.json";
    if (cached(csv, summary, key)) {
        std::ifstream f(csv);
        auto series = field::load_field_csv(f);
        if (series.size() == orb.size()) return series;
    }
    const auto grid = earth::build_grid(in.profile, in.coefficients, cfg.resolution, cfg.domain, cfg.polarization);
    const Eigen::Vector3d axis = sensor_axis(cfg, orb);
    auto series = field::integrate_field(grid, orb, cfg.kernel, axis);
    const auto proj = series.projections();
    const auto normal = field::project_normal(series, orb);
    double rms = 0.0;
    for (double p : proj) rms += p * p;
    rms = std::sqrt(rms / static_cast<double>(proj.size()));

    out.write("field.csv", field::field_csv(series));
    nlohmann::json j = {
        {"inputs_sha256", key},
        {"window_utc", window_iso(cfg, orb)},
        {"samples", series.size()},
        {"dt_s", orb.dt},
        {"orbit", {{"id", orb.orbit_id}, {"radius_m", orb.radius}, {"period_s", orb.period()},
                   {"speed_m_s", orb.radius * orb.angular_rate}, {"frequency_Hz", 1.0 / orb.period()}}},
        {"grid", {{"n_radial", cfg.resolution.radial}, {"n_polar", cfg.resolution.polar},
                  {"n_azimuth", cfg.resolution.azimuthal}, {"cells", grid.size()},
                  {"polarized_spins", earth::total_polarized_spins(grid)}}},
        {"kernel", {{"kind", cfg.kernel.kind}, {"f", cfg.kernel.coupling},
                    {"lambda_m", std::isinf(cfg.kernel.range) ? nlohmann::json("inf") : nlohmann::json(cfg.kernel.range)}}},
        {"sensor_axis_eci", {axis.x(), axis.y(), axis.z()}},
        {"peak_projection_T", peak_abs(proj)},
        {"rms_projection_T", rms},
        {"peak_normal_T", peak_abs(normal)},
        {"normal_power_fraction", field::axis_power_fraction(series, orb.plane_normal(), false)},
        {"normal_power_fraction_oscillating", field::axis_power_fraction(series, orb.plane_normal(), true)},
    };
    out.write_json("field_summary.json", j);
    if (cfg.plots) {
        out.write("field_projection.svg",
                  time_plot(series.times(), proj, 1e12, "Pseudofield on the sensor axis", "B (pT)"));
    }
    return series;
}

/// Forward-models the sensor and extracts the pseudofield estimate.
inline std::vector<double> sensor_stage(const PipelineConfig& cfg, const Inputs& in,
                                        const orbit::OrbitStateSeries& orb, ArtifactWriter& out) {
    const std::string key = fingerprint(cfg, {"paths", "window", "grid", "kernel", "sensor", "run"});
    const fs::path csv = out.dir() / "sensor.csv";
    const fs::path summary = out.dir() / "sensor_summary.json";
    if (cached(csv, summary, key)) {
        std::ifstream f(csv);
        std::string line;
        std::vector<double> b;
        std::getline(f, line);
        while (std::getline(f, line)) {
            const auto cols = exospin::detail::split(line);
            double v = 0.0;
            if (cols.size() == 2 && exospin::detail::parse_double(cols[1], v)) b.push_back(v);
        }
        if (b.size() == orb.size()) return b;
    }
    const auto series = field_stage(cfg, in, orb, out);
    sensor::SensorConfig sc = cfg.sensor;
    sc.sensitive_axis = sensor_axis(cfg, orb);
    const auto ambient = sensor::ambient_projection(in.coefficients, orb, sc.sensitive_axis);
    const auto rotation = sensor::vibration_series(orb.size(), sc);
    const auto species = sensor::xenon_pair();
    const auto record = sensor::forward_model(series, ambient, rotation, sc, species);
    const auto estimate = sensor::extract_pseudofield(record, species, sc);

    out.write("precession.csv", sensor::precession_csv(record));
    std::string est = "t_s,b_est_T\n";
    for (std::size_t k = 0; k < estimate.size(); ++k) {
        const double row[] = {record.samples[k].t, estimate[k]};
        exospin::detail::append_row(est, row);
    }
    out.write("sensor.csv", est);

    const auto truth = series.projections();
    const double f_orb = 1.0 / orb.period();
    std::vector<double> residual(estimate.size());
    for (std::size_t k = 0; k < estimate.size(); ++k) residual[k] = estimate[k] - truth[k];
    const nlohmann::json j = {
        {"inputs_sha256", key},
        {"species", {{{"name", species.first.name}, {"gamma_Hz_per_T", species.first.gamma}, {"F", species.first.F}},
                     {{"name", species.second.name}, {"gamma_Hz_per_T", species.second.gamma}, {"F", species.second.F}}}},
        {"sign_convention", "Omega_1 < 0 (gamma_1 < 0) and Omega_2 > 0 for a positive bias field; "
                            "|Omega_1| - |R Omega_2| = sign(gamma_1) (Omega_1 - R Omega_2)"},
        {"ratio_R", sensor::gyromagnetic_ratio(species)},
        {"calibration_error", sc.calibration_error},
        {"rng_seed", sc.rng_seed},
        {"injected_orbit_amplitude_T", analysis::tone_amplitude(truth, orb.dt, f_orb)},
        {"recovered_orbit_amplitude_T", analysis::tone_amplitude(estimate, orb.dt, f_orb)},
        {"residual_mean_T", analysis::detail::mean(residual)},
        {"noise_budget", sensor::noise_budget(sc, species).to_json()},
    };
    out.write_json("sensor_summary.json", j);
    if (cfg.plots) {
        out.write("sensor.svg", time_plot(series.times(), estimate, 1e12, "Recovered pseudofield", "B (pT)"));
    }
    return estimate;
}

// ---------------------------------------------------------------------------

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> c{"simulate-field", "simulate-sensor", "spectrum", "allan", "exclusion",
                                            "budget"};
    return c;
}

/// Runs one command, writing artifacts under `out_dir`.
inline void run(const std::string& command, const PipelineConfig& cfg, const fs::path& out_dir) {
    if (std::find(commands().begin(), commands().end(), command) == commands().end()) {
        throw Error(ErrorKind::argument, "pipeline", "unknown command '" + command + "'");
    }
    set_max_threads(cfg.threads);
    ArtifactWriter out(out_dir);
    out.write("config_resolved.ini", cfg.echo);

    if (command == "budget") {
        out.write_json("budget.json", sensor::noise_budget(cfg.sensor).to_json());
        out.finish();
        return;
    }

    const Inputs in = load_inputs(cfg);
    if (command == "exclusion") {
        const auto grid =
            earth::build_grid(in.profile, in.coefficients, cfg.exclusion_resolution, cfg.domain, cfg.polarization);
        const auto orb = mission_orbit(cfg, in, cfg.exclusion_dt);
        const double threshold = cfg.threshold.value_or(
            analysis::campaign_sensitivity(cfg.sensor.shot_sensitivity, cfg.shot_time, cfg.campaign_days));
        const auto lambdas = analysis::log_space(cfg.lambda_min, cfg.lambda_max, cfg.lambda_points);
        field::InteractionKernel k = cfg.kernel;
        const auto curve = analysis::exclusion_curve(grid, orb, k, lambdas, threshold);
        out.write("exclusion.csv", analysis::exclusion_csv(curve));
        auto j = analysis::exclusion_json(curve);
        j["campaign"] = {{"shot_sensitivity_T", cfg.sensor.shot_sensitivity}, {"shot_time_s", cfg.shot_time},
                         {"campaign_days", cfg.campaign_days}, {"threshold_from_config", cfg.threshold.has_value()}};
        j["reference_coupling"] = cfg.reference_coupling;
        j["grid"] = {cfg.exclusion_resolution.radial, cfg.exclusion_resolution.polar,
                     cfg.exclusion_resolution.azimuthal};
        for (auto& p : j["points"]) {
            p["improvement_orders"] = p["f_limit"].is_null()
                                          ? nlohmann::json(nullptr)
                                          : nlohmann::json(std::log10(cfg.reference_coupling / p["f_limit"].get<double>()));
        }
        out.write_json("exclusion.json", j);
        if (cfg.plots) {
            std::vector<exospin::detail::PlotSeries> overlays;
            if (cfg.overlay) {
                exospin::detail::PlotSeries o;
                o.label = "overlay";
                o.color = "#b03a2e";
                std::istringstream f(read_file(*cfg.overlay));
                std::string line;
                while (std::getline(f, line)) {
                    const auto cols = exospin::detail::split(line);
                    double a = 0.0, b = 0.0;
                    if (cols.size() >= 2 && exospin::detail::parse_double(cols[0], a) &&
                        exospin::detail::parse_double(cols[1], b)) {
                        o.x.push_back(a);
                        o.y.push_back(b);
                    }
                }
                overlays.push_back(o);
            }
            out.write("exclusion.svg", analysis::exclusion_svg(curve, "Forecast coupling limit", overlays));
        }
        out.finish();
        return;
    }

    const auto orb = mission_orbit(cfg, in, cfg.dt);
    if (command == "simulate-field") {
        field_stage(cfg, in, orb, out);
    } else if (command == "simulate-sensor") {
        sensor_stage(cfg, in, orb, out);
    } else if (command == "spectrum") {
        if (cfg.duration < 2.0 * orb.period()) {
            throw Error(ErrorKind::domain, "analysis",
                        "spectrum needs at least two orbital periods (" +
                            exospin::detail::format_double(2.0 * orb.period()) + " s), window is " +
                            exospin::detail::format_double(cfg.duration) + " s");
        }
        std::vector<double> values;
        if (cfg.spectrum_source == "sensor") {
            values = sensor_stage(cfg, in, orb, out);
        } else {
            values = field_stage(cfg, in, orb, out).projections();
        }
        analysis::SpectrumOptions opt;
        opt.window = cfg.window;
        opt.min_prominence = cfg.min_prominence;
        opt.min_split = cfg.min_split;
        const auto spec = analysis::amplitude_spectrum(values, orb.dt, opt);
        out.write("spectrum.csv", analysis::spectrum_csv(spec));
        auto j = analysis::spectrum_json(spec);
        j["source"] = cfg.spectrum_source;
        j["orbit_frequency_Hz"] = 1.0 / orb.period();
        j["sidereal_frequency_Hz"] = 1.0 / constants::sidereal_day;
        out.write_json("spectrum.json", j);
        if (cfg.plots) out.write("spectrum.svg", analysis::spectrum_svg(spec, "Amplitude spectrum"));
    } else if (command == "allan") {
        const auto estimate = sensor_stage(cfg, in, orb, out);
        auto taus = cfg.taus.empty() ? analysis::log_taus(estimate.size(), orb.dt) : cfg.taus;
        const auto curve = analysis::allan_deviation(estimate, orb.dt, taus);
        out.write("allan.csv", analysis::allan_csv(curve));
        out.write_json("allan.json", analysis::allan_json(curve));
        if (cfg.plots) out.write("allan.svg", analysis::allan_svg(curve, "Allan deviation of the recovered field"));
    }
    out.finish();
}

/// Process exit status for an error kind.
inline int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::config:
    case ErrorKind::validation:
        return 2;
    case ErrorKind::io:
    case ErrorKind::parse:
    case ErrorKind::format:
    case ErrorKind::integrity:
        return 3;
    case ErrorKind::domain:
    case ErrorKind::alignment:
        return 4;
    default:
        return 1;
    }
}

/// Output directory precedence: command line, then EXOSPIN_OUT, then config.
inline fs::path resolve_output_dir(const PipelineConfig& cfg, const std::optional<fs::path>& cli) {
    if (cli) return *cli;
    if (const char* env = std::getenv("EXOSPIN_OUT"); env != nullptr && *env != '\0') return env;
    return cfg.output_dir;
}

} // namespace exospin::pipeline
