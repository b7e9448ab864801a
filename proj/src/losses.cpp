#include "turnlnl/losses.hpp"

#include <atomic>
#include <cassert>
#include <cmath>
#include <limits>

#include "turnlnl/errors.hpp"

namespace turnlnl {

namespace {
std::atomic<std::uint64_t> g_elr_clamps{0};
}

void softmax_probs(std::span<const double> logits, std::span<double> probs) {
    assert(logits.size() == probs.size() && !logits.empty());
    double mx = -std::numeric_limits<double>::infinity();
    for (const double z : logits) {
        if (!std::isfinite(z)) throw NumericError("softmax: non-finite logit");
        if (z > mx) mx = z;
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        probs[j] = std::exp(logits[j] - mx);
        sum += probs[j];
    }
    for (auto& p : probs) p /= sum;
}

double ce_loss_grad(std::span<const double> logits, std::uint32_t label,
                    std::span<double> dlogits) {
    assert(label < logits.size());
    softmax_probs(logits, dlogits);
    const double loss = -std::log(std::max(dlogits[label], 1e-12));
    dlogits[label] -= 1.0;
    return loss;
}

double gce_loss_grad(std::span<const double> logits, std::uint32_t label, double q,
                     std::span<double> dlogits) {
    if (q <= 0.0 || q > 1.0) throw ConfigError("gce: q must be in (0, 1]");
    assert(label < logits.size());
    softmax_probs(logits, dlogits);
    const double py = std::min(std::max(dlogits[label], 1e-7), 1.0);
    const double pyq = std::pow(py, q);
    const double loss = (1.0 - pyq) / q;
    for (auto& g : dlogits) g *= pyq;
    dlogits[label] -= pyq;
    return loss;
}

void ElrState::update_targets(std::span<const double> probs, std::size_t row) {
    assert(row < targets.rows && probs.size() == targets.cols);
    double* t = targets[row];
    for (std::size_t j = 0; j < targets.cols; ++j)
        t[j] = beta * t[j] + (1.0 - beta) * probs[j];
}

double elr_loss_grad(std::span<const double> logits, std::uint32_t label,
                     std::span<const double> target_row, double lambda,
                     std::span<double> dlogits) {
    if (lambda < 0.0) throw ConfigError("elr: lambda must be nonnegative");
    assert(label < logits.size() && target_row.size() == logits.size());
    softmax_probs(logits, dlogits);
    double s = 0.0;
    for (std::size_t j = 0; j < logits.size(); ++j) s += dlogits[j] * target_row[j];
    double one_minus_s = 1.0 - s;
    if (one_minus_s < 1e-6) {
        one_minus_s = 1e-6;
        g_elr_clamps.fetch_add(1, std::memory_order_relaxed);
    }
    const double loss =
        -std::log(std::max(dlogits[label], 1e-12)) + lambda * std::log(one_minus_s);
    const double coef = lambda / one_minus_s;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        const double p = dlogits[j];
        dlogits[j] = p - coef * p * (target_row[j] - s);
    }
    dlogits[label] -= 1.0;
    return loss;
}

std::uint64_t elr_clamp_count() { return g_elr_clamps.load(std::memory_order_relaxed); }
void reset_elr_clamp_count() { g_elr_clamps.store(0, std::memory_order_relaxed); }

} // namespace turnlnl
