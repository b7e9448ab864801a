#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "turnlnl/dataset.hpp"
#include "turnlnl/model.hpp"
#include "turnlnl/optim.hpp"
#include "turnlnl/select.hpp"
#include "turnlnl/train.hpp"

namespace turnlnl {

enum class CleansingMode { multiple, once, none };

std::string to_string(CleansingMode mode);
CleansingMode cleansing_mode_from_string(const std::string& s);

struct TurnConfig {
    std::size_t e_lp = 20;
    std::size_t e_fft = 4;
    double gce_q = 0.7;
    CleansingMode cleansing = CleansingMode::multiple;
    bool lp_enabled = true;
    bool reinit_head = false;
    OptimSpec lp_optim{OptimKind::sgd, 3e-3, 0.0, 0.0};
    OptimSpec fft_optim{OptimKind::adamw, 3e-3, 0.0, 0.0};
    std::size_t batch_size = 128;
    SelectionConfig selection; // tau and GMM controls live here
    std::uint64_t seed = 0;

    void validate() const;
};

struct BaselineConfig {
    LossKind method = LossKind::ce;
    TuningMode tuning = TuningMode::LP;
    std::size_t epochs = 0; // 0 picks the default: 20 for LP, 5 for FFT
    double gce_q = 0.7;
    double elr_beta = 0.7;
    double elr_lambda = 3.0;
    OptimSpec lp_optim{OptimKind::sgd, 3e-3, 0.0, 0.0};
    OptimSpec fft_optim{OptimKind::adamw, 3e-3, 0.0, 0.0};
    std::size_t batch_size = 128;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    std::string stage; // "lp" or "fft"
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double test_acc = 0.0;
    std::optional<double> val_acc;
    std::optional<std::size_t> selected;
    std::optional<double> purity;
    double wall_ms = 0.0;   // whole epoch body, selection included
    double select_ms = 0.0; // portion of wall_ms spent picking the subset
};

struct RunReport {
    std::string method;
    std::string tuning;
    std::uint64_t seed = 0;
    std::vector<EpochRecord> epochs;
    double best_acc = 0.0;
    double last_acc = 0.0;
    std::optional<double> final_purity;
    double total_wall_ms = 0.0;
};

/// Argmax accuracy against the dataset's given labels.
double evaluate(const Extractor& ext, const LinearHead& head, const Dataset& ds);

/// Frozen-extractor features for every row, one pass.
Matrix extract_features(const Extractor& ext, const Dataset& ds);

/// CE losses of a head applied directly to cached features.
LossVector head_losses(const LinearHead& head, const Matrix& feats,
                       std::span<const std::uint32_t> labels);

/// Source-task training for the stand-in extractor: 10 epochs of CE with
/// AdamW(1e-3) on a throwaway head, batches of 128.
void pretrain_extractor(Extractor& ext, const Dataset& pretrain, std::uint64_t seed);

/// Step 1: train the head for e_lp epochs of GCE(gce_q) on frozen features.
/// Extractor parameters are never touched. Returns the feature cache
/// (computed even when e_lp = 0).
Matrix run_lp(const Extractor& ext, LinearHead& head, const Dataset& train,
              const TurnConfig& cfg);

/// Full two-step run: LP warm-up (unless lp_enabled = false), then e_fft
/// epochs of CE on the clean subset re-selected per cleansing mode
/// (multiple = every epoch, once = before the first, none = full set).
RunReport run_turn(Extractor& ext, LinearHead& head, const Dataset& train,
                   const Dataset& test, const Dataset* valid, const TurnConfig& cfg);

/// CE/GCE/ELR under plain LP or FFT with the same report schema.
RunReport run_baseline(Extractor& ext, LinearHead& head, const Dataset& train,
                       const Dataset& test, const Dataset* valid,
                       const BaselineConfig& cfg);

} // namespace turnlnl
