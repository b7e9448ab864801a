#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "turnlnl/errors.hpp"
#include "turnlnl/experiment.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Noisy-label training toolkit: linear-probe warm-up, "
                 "GMM-based clean-sample selection, fine-tuning"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_path;
    std::uint64_t seed_flag = 0;
    bool deterministic = false;
    std::vector<std::string> report_inputs;

    auto* gen = app.add_subcommand(
        "gen", "Write dataset bundles and, when configured, a noisy train bundle");
    gen->add_option("--config", config_path, "experiment config file")->required();
    gen->add_option("--out", out_path, "output directory")->required();
    auto* gen_seed = gen->add_option("--seed", seed_flag, "override [run] seed");

    auto* run = app.add_subcommand(
        "run", "Execute the configured runs (sweep axes expand to a cartesian product)");
    run->add_option("--config", config_path, "experiment config file")->required();
    run->add_option("--out", out_path, "output directory")->required();
    auto* run_seed = run->add_option("--seed", seed_flag, "override [run] seed");
    run->add_flag("--deterministic", deterministic,
                  "single-threaded, fixed-order execution");

    auto* report = app.add_subcommand(
        "report", "Merge summary.csv files into a best/last pivot table");
    report->add_option("inputs", report_inputs, "summary.csv files or run directories")
        ->required();
    report->add_option("--out", out_path, "pivot CSV path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        std::optional<std::uint64_t> seed;
        if (gen_seed->count() > 0 || run_seed->count() > 0) {
            seed = seed_flag;
        } else if (const char* env = std::getenv("TURNLNL_SEED")) {
            seed = turnlnl::parse_u64(env, "TURNLNL_SEED");
        }

        if (gen->parsed()) return turnlnl::cmd_gen(config_path, out_path, seed);
        if (run->parsed())
            return turnlnl::cmd_run(config_path, out_path, seed, deterministic);
        std::vector<std::filesystem::path> inputs(report_inputs.begin(),
                                                  report_inputs.end());
        return turnlnl::cmd_report(inputs, out_path);
    } catch (const turnlnl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const turnlnl::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const turnlnl::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 4;
    }
}
