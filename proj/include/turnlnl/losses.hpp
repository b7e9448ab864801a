#pragma once

#include <cstdint>
#include <span>

#include "turnlnl/matrix.hpp"

namespace turnlnl {

/// Stable softmax (max-shifted). probs must have the same length as logits.
void softmax_probs(std::span<const double> logits, std::span<double> probs);

/// Cross-entropy. Returns -log p[label] (p clamped >= 1e-12) and writes
/// dlogits = p - onehot(label).
double ce_loss_grad(std::span<const double> logits, std::uint32_t label,
                    std::span<double> dlogits);

/// Generalized Cross Entropy, loss = (1 - p_y^q)/q with p_y clamped to
/// [1e-7, 1]. dlogits = p_y^q * (p - onehot(label)); q=1 is MAE, q->0
/// approaches CE.
double gce_loss_grad(std::span<const double> logits, std::uint32_t label, double q,
                     std::span<double> dlogits);

/// Per-sample moving-average targets for Early-Learning Regularization.
struct ElrState {
    Matrix targets; // N x C, rows start at zero
    double beta = 0.7;
    double lambda = 3.0;

    ElrState() = default;
    ElrState(std::size_t n, std::size_t c, double beta_, double lambda_)
        : targets(n, c), beta(beta_), lambda(lambda_) {}

    /// t_row <- beta * t_row + (1 - beta) * probs
    void update_targets(std::span<const double> probs, std::size_t row);
};

/// ELR loss = CE + lambda * log(1 - <p, t>), with 1 - <p, t> clamped to
/// >= 1e-6 (clamp activations counted, see elr_clamp_count).
double elr_loss_grad(std::span<const double> logits, std::uint32_t label,
                     std::span<const double> target_row, double lambda,
                     std::span<double> dlogits);

/// Number of times the ELR log-argument clamp fired since the last reset.
std::uint64_t elr_clamp_count();
void reset_elr_clamp_count();

} // namespace turnlnl
