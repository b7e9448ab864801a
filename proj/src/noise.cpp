#include "turnlnl/noise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "turnlnl/errors.hpp"
#include "turnlnl/rng.hpp"

namespace turnlnl {

std::string to_string(NoiseKind kind) {
    switch (kind) {
        case NoiseKind::none: return "none";
        case NoiseKind::symmetric: return "symmetric";
        case NoiseKind::asymmetric: return "asymmetric";
        case NoiseKind::instance: return "instance";
    }
    return "none";
}

NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "none") return NoiseKind::none;
    if (s == "symmetric") return NoiseKind::symmetric;
    if (s == "asymmetric") return NoiseKind::asymmetric;
    if (s == "instance") return NoiseKind::instance;
    throw ConfigError("unknown noise kind '" + s + "'");
}

namespace {

NoisyDataset with_mask(Dataset d) {
    NoisyDataset out;
    out.flip_mask.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i)
        out.flip_mask[i] = d.given_labels[i] != d.true_labels[i];
    out.dataset = std::move(d);
    return out;
}

void require_true_labels(const Dataset& d) {
    if (!d.has_true_labels()) throw DataError("noise injection requires true labels");
}

} // namespace

NoisyDataset inject_symmetric(const Dataset& dataset, double ratio, std::uint64_t seed,
                              bool allow_identity_flip) {
    require_true_labels(dataset);
    if (ratio < 0.0 || ratio > 1.0) throw ConfigError("symmetric noise: ratio must be in [0,1]");
    if (dataset.num_classes < 2 && ratio > 0.0 && !allow_identity_flip)
        throw ConfigError("symmetric noise: need at least 2 classes");
    Dataset d = dataset;
    d.given_labels = d.true_labels;
    const auto n_flips =
        static_cast<std::size_t>(ratio * static_cast<double>(d.size()));
    Rng rng(seed, /*stream=*/31);
    const auto rows = rng.sample_without_replacement(d.size(), n_flips);
    const std::uint64_t c = d.num_classes;
    for (const std::size_t i : rows) {
        if (allow_identity_flip) {
            d.given_labels[i] = static_cast<std::uint32_t>(rng.uniform_int(c));
        } else {
            const auto draw = static_cast<std::uint32_t>(rng.uniform_int(c - 1));
            d.given_labels[i] = draw + (draw >= d.true_labels[i] ? 1u : 0u);
        }
    }
    return with_mask(std::move(d));
}

NoisyDataset inject_asymmetric(const Dataset& dataset,
                               const std::vector<std::vector<std::uint32_t>>& groups,
                               double ratio, std::uint64_t seed) {
    require_true_labels(dataset);
    if (ratio < 0.0 || ratio > 1.0) throw ConfigError("asymmetric noise: ratio must be in [0,1]");
    std::vector<std::uint32_t> successor(dataset.num_classes, kUnknownLabel);
    std::vector<bool> seen(dataset.num_classes, false);
    for (const auto& g : groups) {
        if (g.empty()) throw ConfigError("asymmetric noise: empty group");
        for (std::size_t k = 0; k < g.size(); ++k) {
            if (g[k] >= dataset.num_classes)
                throw ConfigError("asymmetric noise: class id out of range in groups");
            if (seen[g[k]]) throw ConfigError("asymmetric noise: class listed twice in groups");
            seen[g[k]] = true;
            successor[g[k]] = g[(k + 1) % g.size()];
        }
    }
    for (std::uint32_t c = 0; c < dataset.num_classes; ++c)
        if (!seen[c])
            throw ConfigError("asymmetric noise: class " + std::to_string(c) + " missing from groups");

    Dataset d = dataset;
    d.given_labels = d.true_labels;
    std::vector<std::vector<std::size_t>> by_class(d.num_classes);
    for (std::size_t i = 0; i < d.size(); ++i) by_class[d.true_labels[i]].push_back(i);
    Rng rng(seed, /*stream=*/37);
    for (std::uint32_t c = 0; c < d.num_classes; ++c) {
        auto& rows = by_class[c];
        const auto n_flips =
            static_cast<std::size_t>(ratio * static_cast<double>(rows.size()));
        rng.shuffle(rows);
        for (std::size_t k = 0; k < n_flips; ++k) d.given_labels[rows[k]] = successor[c];
    }
    return with_mask(std::move(d));
}

std::pair<NoisyDataset, InstanceNoiseDraw> inject_instance(const Dataset& dataset, double ratio,
                                                           double std_dev, std::uint64_t seed) {
    require_true_labels(dataset);
    if (ratio < 0.0 || ratio > 1.0) throw ConfigError("instance noise: ratio must be in [0,1]");
    if (std_dev < 0.0) throw ConfigError("instance noise: std must be positive");
    std_dev = std::max(std_dev, 1e-12);
    if (dataset.num_classes < 2) throw ConfigError("instance noise: need at least 2 classes");
    for (const float v : dataset.inputs)
        if (!std::isfinite(v)) throw NumericError("instance noise: non-finite input");

    Dataset d = dataset;
    d.given_labels = d.true_labels;
    const std::size_t n = d.size();
    const std::size_t L = d.dim;
    const std::uint32_t C = d.num_classes;

    Rng rng(seed, /*stream=*/41);
    InstanceNoiseDraw draw;
    draw.flip_rates.resize(n);
    for (auto& q : draw.flip_rates) {
        double v;
        do {
            v = ratio + std_dev * rng.normal();
        } while (v < 0.0 || v > 1.0);
        q = v;
    }
    draw.W = Matrix(L, C);
    for (auto& w : draw.W.data) w = rng.normal();

    std::vector<double> scores(C);
    for (std::size_t i = 0; i < n; ++i) {
        const float* x = d.row(i);
        const std::uint32_t y = d.true_labels[i];
        double mx = -std::numeric_limits<double>::infinity();
        for (std::uint32_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < L; ++j) s += static_cast<double>(x[j]) * draw.W[j][c];
            scores[c] = s;
            if (c != y && s > mx) mx = s;
        }
        double z = 0.0;
        for (std::uint32_t c = 0; c < C; ++c) {
            scores[c] = c == y ? 0.0 : std::exp(scores[c] - mx);
            z += scores[c];
        }
        const double q = draw.flip_rates[i];
        // p[c] = q * softmax(c) off the true class, p[y] = 1 - q; sample by CDF walk.
        double u = rng.uniform();
        std::uint32_t pick = y;
        double acc = 1.0 - q;
        if (u >= acc) {
            for (std::uint32_t c = 0; c < C; ++c) {
                if (c == y) continue;
                acc += q * scores[c] / z;
                if (u < acc) {
                    pick = c;
                    break;
                }
            }
        }
        d.given_labels[i] = pick;
    }
    return {with_mask(std::move(d)), std::move(draw)};
}

NoisyDataset inject(const Dataset& dataset, const NoiseSpec& spec) {
    switch (spec.kind) {
        case NoiseKind::none: {
            Dataset d = dataset;
            if (d.has_true_labels()) d.given_labels = d.true_labels;
            return with_mask(std::move(d));
        }
        case NoiseKind::symmetric:
            return inject_symmetric(dataset, spec.ratio, spec.seed, spec.allow_identity_flip);
        case NoiseKind::asymmetric: {
            const auto& groups = spec.groups.empty() && dataset.num_classes == 100
                                     ? cifar100_superclass_groups()
                                     : spec.groups;
            return inject_asymmetric(dataset, groups, spec.ratio, spec.seed);
        }
        case NoiseKind::instance:
            return inject_instance(dataset, spec.ratio, spec.std_dev, spec.seed).first;
    }
    throw ConfigError("inject: unknown noise kind");
}

const std::vector<std::vector<std::uint32_t>>& cifar100_superclass_groups() {
    static const std::vector<std::vector<std::uint32_t>> groups = {
        {4, 30, 55, 72, 95},  // aquatic mammals
        {1, 32, 67, 73, 91},  // fish
        {54, 62, 70, 82, 92}, // flowers
        {9, 10, 16, 28, 61},  // food containers
        {0, 51, 53, 57, 83},  // fruit and vegetables
        {22, 39, 40, 86, 87}, // household electrical devices
        {5, 20, 25, 84, 94},  // household furniture
        {6, 7, 14, 18, 24},   // insects
        {3, 42, 43, 88, 97},  // large carnivores
        {12, 17, 37, 68, 76}, // large man-made outdoor things
        {23, 33, 49, 60, 71}, // large natural outdoor scenes
        {15, 19, 21, 31, 38}, // large omnivores and herbivores
        {34, 63, 64, 66, 75}, // medium-sized mammals
        {26, 45, 77, 79, 99}, // non-insect invertebrates
        {2, 11, 35, 46, 98},  // people
        {27, 29, 44, 78, 93}, // reptiles
        {36, 50, 65, 74, 80}, // small mammals
        {47, 52, 56, 59, 96}, // trees
        {8, 13, 48, 58, 90},  // vehicles 1
        {41, 69, 81, 85, 89}, // vehicles 2
    };
    return groups;
}

} // namespace turnlnl
