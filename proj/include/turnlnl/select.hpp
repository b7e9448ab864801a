#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "turnlnl/model.hpp"

namespace turnlnl {

/// Per-sample cross-entropy losses plus the min-max record used to map them
/// to [0,1].
struct LossVector {
    std::vector<double> values;
    double min_value = 0.0;
    double max_value = 0.0;

    /// (v - min) / (max - min); all zeros when max == min.
    std::vector<double> normalized() const;
};

/// Two-component 1-D Gaussian mixture, components ordered by mean
/// (index 0 = low, 1 = high).
struct Gmm1D {
    double mean[2] = {0.0, 0.0};
    double var[2] = {1e-6, 1e-6};
    double weight[2] = {0.5, 0.5};
    std::size_t iters = 0;
    bool converged = false;
    std::vector<double> ll_trace; // log-likelihood per EM iteration

    /// Modes too close to separate clean from noisy losses.
    bool degenerate() const { return mean[1] - mean[0] < 1e-3; }
};

struct SelectionConfig {
    double tau = 0.6;
    std::size_t min_class_fit = 20;
    std::size_t max_iters = 100;
    double tol = 1e-6;
    bool per_class = true;
    std::uint64_t seed = 0;
};

struct ClassFallback {
    bool degenerate_fit = false; // below-class-mean rule used
    bool empty_class = false;    // lowest-loss singleton used, forces N = 1
};

struct SelectionResult {
    std::vector<std::uint32_t> indices; // grouped by class id, ascending within
    std::vector<std::size_t> class_candidates;
    std::vector<ClassFallback> fallbacks;
    std::size_t per_class_n = 0;
    std::optional<double> purity;
};

/// CE loss of every row under the current parameters; no updates.
LossVector per_sample_losses(const Extractor& ext, const LinearHead& head,
                             const float* inputs, std::size_t width,
                             std::span<const std::uint32_t> labels,
                             std::size_t rows);

/// EM fit of a two-component mixture. Init: means at the 10th/90th
/// percentiles, equal weights, both variances at the sample variance.
/// Variance floor 1e-6 each M-step; stops when the log-likelihood improves
/// by less than tol (after the first iteration) or at max_iters. All values
/// within 1e-12 of each other yields a degenerate fit (equal means).
Gmm1D fit_gmm1d(std::span<const double> values, const SelectionConfig& cfg);

/// Posterior of the low-mean component at v, evaluated in log space.
double posterior_low(const Gmm1D& gmm, double v);

/// Per-class candidate sets {i : label = c, posterior_low > tau} from
/// per-class fits (classes with >= min_class_fit rows; global fit otherwise
/// or when per_class is off). Degenerate fit: candidates are the rows
/// strictly below the class mean loss. Any empty class contributes its
/// lowest-loss row and N drops to 1; otherwise N = min candidate count.
/// N rows per class are then drawn uniformly without replacement.
SelectionResult select_clean(const LossVector& losses,
                             std::span<const std::uint32_t> given_labels,
                             std::size_t num_classes, const SelectionConfig& cfg);

/// Fraction of selected rows whose given label matches the true label.
/// Rows with the unknown-label sentinel are skipped; nullopt when none
/// remain.
std::optional<double> selection_purity(std::span<const std::uint32_t> indices,
                                       std::span<const std::uint32_t> given_labels,
                                       std::span<const std::uint32_t> true_labels);

/// One dump line per class: epoch,class,candidates,N,purity (purity of that
/// class's selected rows, "na" when unknown).
std::string selection_dump_lines(std::size_t epoch, const SelectionResult& sel,
                                 std::span<const std::uint32_t> given_labels,
                                 std::span<const std::uint32_t> true_labels,
                                 std::size_t num_classes);

} // namespace turnlnl
