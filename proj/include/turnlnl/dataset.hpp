#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace turnlnl {

/// Sentinel for "true label unknown" in stored label files.
inline constexpr std::uint32_t kUnknownLabel = 0xFFFFFFFFu;

enum class DatasetKind { raw, feature };

std::string to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(const std::string& s);

/// A labelled point set: raw inputs x_i or pre-extracted features z_i,
/// the (possibly corrupted) given labels, and optional ground-truth labels.
struct Dataset {
    std::vector<float> inputs; // N x dim, row-major
    std::size_t dim = 0;
    std::vector<std::uint32_t> given_labels;
    std::vector<std::uint32_t> true_labels; // empty when unavailable
    std::uint32_t num_classes = 0;
    DatasetKind kind = DatasetKind::raw;

    std::size_t size() const { return given_labels.size(); }
    bool has_true_labels() const { return !true_labels.empty(); }

    const float* row(std::size_t i) const { return inputs.data() + i * dim; }
    float* row(std::size_t i) { return inputs.data() + i * dim; }

    /// Throws DataError / NumericError when an invariant is broken.
    void validate() const;
};

struct SyntheticSpec {
    std::uint32_t num_classes = 0;
    std::size_t input_dim = 0;
    std::size_t per_class_train = 0;
    std::size_t per_class_test = 0;
    std::size_t per_class_pretrain = 0;
    double separation = 0.0;
    std::uint64_t seed = 0;

    void validate() const; // throws ConfigError
};

struct SyntheticBundle {
    Dataset train;
    Dataset test;
    Dataset pretrain;
};

/// Gaussian clusters: one mean per class drawn from separation * N(0, I),
/// samples are mean + N(0, I). All splits share the class means, labels are
/// clean at generation, and equal specs produce bitwise-equal bundles.
SyntheticBundle generate_synthetic(const SyntheticSpec& spec);

struct SplitSpec {
    double valid_fraction = 0.0;
    std::uint64_t seed = 0;
};

struct SplitResult {
    Dataset train;
    Dataset valid;
};

/// Stratified per-class split; indices are partitioned and deterministic in
/// the seed. Classes too small for the fraction contribute no validation rows.
SplitResult split(const Dataset& dataset, const SplitSpec& spec);

/// Writes features.tfv, given_labels.tlb, optional true_labels.tlb and
/// meta.txt into `dir` (created if missing). Byte-exact format, see README.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Reads a bundle written by write_dataset, validating magic bytes, sizes,
/// label ranges and feature finiteness.
Dataset read_dataset(const std::filesystem::path& dir);

} // namespace turnlnl
