#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "turnlnl/config.hpp"
#include "turnlnl/noise.hpp"
#include "turnlnl/pipeline.hpp"

namespace turnlnl {

/// Everything one run needs, resolved from a Config with sweep axes fixed.
struct RunSettings {
    std::string source = "synthetic"; // synthetic | files
    std::filesystem::path data_path;
    SyntheticSpec synth;
    std::size_t feature_dim = 32;
    double valid_fraction = 0.0;

    NoiseSpec noise;

    std::size_t hidden = 128;
    bool adapter = false;
    bool reinit_head = false;

    std::string method = "turn"; // ce | gce | elr | turn
    TuningMode tuning = TuningMode::LP;
    double gce_q = 0.7;
    double elr_beta = 0.7;
    double elr_lambda = 3.0;

    std::size_t e_lp = 20;
    std::size_t e_fft = 4;
    double tau = 0.6;
    CleansingMode cleansing = CleansingMode::multiple;
    bool lp_enabled = true;
    std::size_t min_class_fit = 20;
    bool per_class = true;

    OptimSpec lp_optim{OptimKind::sgd, 3e-3, 0.0, 0.0};
    OptimSpec fft_optim{OptimKind::adamw, 3e-3, 0.0, 0.0};
    std::size_t batch = 128;

    std::uint64_t seed = 1;
    std::size_t epochs = 0; // baseline epoch override, 0 = default
    bool deterministic = false;

    std::string run_id;
};

/// Config resolved at a single sweep point; rejects lists.
RunSettings resolve_settings(const Config& cfg);

/// Cartesian product over the sweep axes (ratio, tau, e_lp, e_fft, lp_lr,
/// fft_lr, seed), run ids r000, r001, ... in that nesting order.
std::vector<RunSettings> expand_runs(const Config& cfg);

/// Data generation/ingestion, noise injection, split, pretraining, and the
/// configured method. Returns the per-epoch report.
RunReport execute_run(const RunSettings& s);

std::string summary_csv_header();
std::string summary_csv_row(const RunSettings& s, const RunReport& rep);
void write_metrics_jsonl(const std::filesystem::path& path, const std::string& run_id,
                         const RunReport& rep);

int cmd_gen(const std::filesystem::path& config_path,
            const std::filesystem::path& out_dir,
            std::optional<std::uint64_t> seed_override);
int cmd_run(const std::filesystem::path& config_path,
            const std::filesystem::path& out_dir,
            std::optional<std::uint64_t> seed_override, bool deterministic);
int cmd_report(const std::vector<std::filesystem::path>& inputs,
               const std::filesystem::path& out_path);

} // namespace turnlnl
