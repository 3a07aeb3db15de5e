// exospin <command> --config <file> [--out <dir>] [--threads N] [--seed N]
#include <exospin/pipeline.hpp>

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    namespace pl = exospin::pipeline;

    CLI::App app{"Orbit-borne search for exotic spin couplings to polarized geoelectrons"};
    std::string command, config;
    std::optional<std::string> out;
    std::optional<unsigned> threads;
    std::optional<std::uint64_t> seed;
    app.add_option("command", command, "simulate-field | simulate-sensor | spectrum | allan | exclusion | budget")
        ->required()
        ->check(CLI::IsMember(pl::commands()));
    app.add_option("--config,-c", config, "pipeline config (INI)")->required();
    app.add_option("--out,-o", out, "output directory (overrides EXOSPIN_OUT and [output] dir)");
    app.add_option("--threads,-j", threads, "worker threads, 0 = all cores");
    app.add_option("--seed", seed, "noise seed (overrides [run] rng_seed)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        auto cfg = pl::validate_config(config);
        pl::apply_overrides(cfg, threads, seed);
        const auto dir = pl::resolve_output_dir(cfg, out ? std::optional<pl::fs::path>(*out) : std::nullopt);
        pl::run(command, cfg, dir);
        std::cout << command << ": wrote " << (dir / "manifest.json").string() << "\n";
        return 0;
    } catch (const exospin::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return pl::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
