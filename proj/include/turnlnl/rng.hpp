#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace turnlnl {

/// Deterministic random number generator with hand-rolled distributions.
///
/// The standard library's distribution objects are implementation-defined,
/// so byte-identical outputs across compilers require generating uniforms,
/// normals and bounded integers ourselves. The core generator is
/// xoshiro256**, seeded through SplitMix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    /// Independent generator derived from (seed, stream). Used to give each
    /// worker, epoch, or per-class fit its own substream.
    Rng(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t next_u64();

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform();

    /// Standard normal via Box-Muller; second value of each pair is cached.
    double normal();

    /// Uniform integer in [0, n) by rejection; n must be positive.
    std::uint64_t uniform_int(std::uint64_t n);

    /// In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_int(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    /// k distinct indices drawn uniformly from [0, n) (partial Fisher-Yates).
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

private:
    std::uint64_t state_[4];
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

/// Deterministic permutation of {0..n-1}.
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

} // namespace turnlnl
