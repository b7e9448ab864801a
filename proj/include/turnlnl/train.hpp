#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "turnlnl/losses.hpp"
#include "turnlnl/model.hpp"
#include "turnlnl/optim.hpp"
#include "turnlnl/rng.hpp"

namespace turnlnl {

enum class LossKind { ce, gce, elr };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

struct LossSpec {
    LossKind kind = LossKind::ce;
    double q = 0.7;          // gce only
    double elr_lambda = 3.0; // elr only
    ElrState* elr = nullptr; // required for elr
};

/// Parameter tensors registered with an optimizer, in update order.
struct BoundParams {
    struct Entry {
        std::size_t slot;
        std::vector<double>* values;
    };
    std::vector<Entry> entries;
    TuningMode mode = TuningMode::LP;
    bool extractor_bound = false;
};

/// Registers the trainable tensors for the given tuning mode: extractor
/// W1,b1,W2,b2 (FFT with a parametric extractor only), then head W,b.
BoundParams bind_model_params(Optimizer& opt, Extractor& ext, LinearHead& head,
                              TuningMode mode);

struct EpochStats {
    double mean_loss = 0.0;
    double accuracy = 0.0;
};

/// One pass over `indices` (rows of `inputs`/`labels`) in shuffled order.
/// Batches of `batch_size`, last partial batch kept. Gradients are
/// batch-means; one optimizer step per batch. ELR targets are updated with
/// the batch probabilities after the gradient is taken. Accuracy and mean
/// loss are measured on the pre-update logits of each batch.
EpochStats train_epoch(Extractor& ext, LinearHead& head, const float* inputs,
                       std::size_t width, std::span<const std::uint32_t> labels,
                       std::span<const std::uint32_t> indices, TuningMode mode,
                       const LossSpec& loss, Optimizer& opt,
                       const BoundParams& bound, std::size_t batch_size,
                       Rng& rng);

/// Fraction of rows whose argmax logit equals the label. Ties resolve to the
/// lowest class index.
double evaluate_accuracy(const Extractor& ext, const LinearHead& head,
                         const float* inputs, std::size_t width,
                         std::span<const std::uint32_t> labels, std::size_t rows);

} // namespace turnlnl
