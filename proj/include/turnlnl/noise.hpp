#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "turnlnl/dataset.hpp"
#include "turnlnl/matrix.hpp"

namespace turnlnl {

enum class NoiseKind { none, symmetric, asymmetric, instance };

std::string to_string(NoiseKind kind);
NoiseKind noise_kind_from_string(const std::string& s);

struct NoiseSpec {
    NoiseKind kind = NoiseKind::none;
    double ratio = 0.0;
    std::vector<std::vector<std::uint32_t>> groups; // asymmetric only
    double std_dev = 0.1;                           // instance only
    bool allow_identity_flip = false;               // symmetric only
    std::uint64_t seed = 0;
};

struct NoisyDataset {
    Dataset dataset;             // given_labels corrupted, true_labels intact
    std::vector<bool> flip_mask; // flip_mask[i] == (given != true)
};

/// Random projection and per-sample flip rates drawn by the
/// instance-dependent injector.
struct InstanceNoiseDraw {
    Matrix W;                      // L x C
    std::vector<double> flip_rates; // q_i in [0,1]
};

/// Flips exactly floor(ratio * N) labels, chosen by a seeded permutation.
/// Replacement labels are uniform over the other C-1 classes unless
/// allow_identity_flip is set (then uniform over all C).
NoisyDataset inject_symmetric(const Dataset& dataset, double ratio, std::uint64_t seed,
                              bool allow_identity_flip = false);

/// Per class c, flips exactly floor(ratio * count_c) rows to the cyclic
/// successor of c within its group.
NoisyDataset inject_asymmetric(const Dataset& dataset,
                               const std::vector<std::vector<std::uint32_t>>& groups,
                               double ratio, std::uint64_t seed);

/// Instance-dependent noise: q_i ~ TruncNormal(ratio, std^2, [0,1]),
/// W ~ N(0,1)^{L x C}, scores x_i^T W with the true class masked out,
/// flip distribution q_i * softmax(scores) and 1-q_i kept on the true label.
std::pair<NoisyDataset, InstanceNoiseDraw> inject_instance(const Dataset& dataset, double ratio,
                                                           double std_dev, std::uint64_t seed);

/// Dispatch on spec.kind.
NoisyDataset inject(const Dataset& dataset, const NoiseSpec& spec);

/// The standard CIFAR-100 coarse label table: 20 groups of 5 fine classes,
/// each group ordered by fine-class id. Usable with inject_asymmetric on
/// 100-class bundles; named "cifar100-super" in configs.
const std::vector<std::vector<std::uint32_t>>& cifar100_superclass_groups();

} // namespace turnlnl
