#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <vector>

#include "turnlnl/dataset.hpp"
#include "turnlnl/errors.hpp"
#include "turnlnl/noise.hpp"
#include "turnlnl/rng.hpp"

using namespace turnlnl;

namespace {

Dataset clean_dataset(std::uint32_t classes, std::size_t per_class,
                      std::size_t dim, std::uint64_t seed) {
    SyntheticSpec spec;
    spec.num_classes = classes;
    spec.input_dim = dim;
    spec.per_class_train = per_class;
    spec.per_class_test = 1;
    spec.per_class_pretrain = 1;
    spec.separation = 2.0;
    spec.seed = seed;
    return generate_synthetic(spec).train;
}

std::size_t count_flips(const NoisyDataset& nd) {
    std::size_t flips = 0;
    for (std::size_t i = 0; i < nd.dataset.size(); ++i) {
        const bool differs =
            nd.dataset.given_labels[i] != nd.dataset.true_labels[i];
        CHECK(differs == static_cast<bool>(nd.flip_mask[i]));
        if (differs) ++flips;
    }
    return flips;
}

} // namespace

TEST_CASE("symmetric noise flips exactly floor(ratio*N) rows, never identity") {
    const Dataset clean = clean_dataset(4, 25, 3, 101); // N = 100
    for (const double ratio : {0.0, 0.13, 0.6, 0.99}) {
        const NoisyDataset nd = inject_symmetric(clean, ratio, 7);
        CHECK(count_flips(nd) ==
              static_cast<std::size_t>(std::floor(ratio * 100.0)));
        for (std::size_t i = 0; i < nd.dataset.size(); ++i) {
            if (nd.flip_mask[i])
                CHECK(nd.dataset.given_labels[i] != nd.dataset.true_labels[i]);
            CHECK(nd.dataset.true_labels[i] == clean.given_labels[i]);
        }
    }
}

TEST_CASE("symmetric noise with identity flips allowed can keep some labels") {
    const Dataset clean = clean_dataset(3, 200, 2, 55); // N = 600
    const NoisyDataset nd = inject_symmetric(clean, 0.9, 13, true);
    const std::size_t flips = count_flips(nd);
    // 540 rows are resampled uniformly over all 3 classes, so roughly a third
    // of them should land back on the true class.
    CHECK(flips < 540);
    CHECK(flips > 270);
}

TEST_CASE("symmetric noise is deterministic and seed-sensitive") {
    const Dataset clean = clean_dataset(5, 20, 2, 3);
    const NoisyDataset a = inject_symmetric(clean, 0.4, 99);
    const NoisyDataset b = inject_symmetric(clean, 0.4, 99);
    const NoisyDataset c = inject_symmetric(clean, 0.4, 100);
    CHECK(a.dataset.given_labels == b.dataset.given_labels);
    CHECK(a.dataset.given_labels != c.dataset.given_labels);
}

TEST_CASE("symmetric noise rejects bad ratios and single-class data") {
    const Dataset clean = clean_dataset(2, 5, 2, 3);
    CHECK_THROWS_AS(inject_symmetric(clean, -0.1, 1), ConfigError);
    CHECK_THROWS_AS(inject_symmetric(clean, 1.5, 1), ConfigError);
    const Dataset single = clean_dataset(1, 5, 2, 3);
    CHECK_THROWS_AS(inject_symmetric(single, 0.5, 1), ConfigError);
}

TEST_CASE("asymmetric noise flips to the cyclic successor within each group") {
    const Dataset clean = clean_dataset(6, 10, 2, 17);
    const std::vector<std::vector<std::uint32_t>> groups = {{0, 1, 2}, {3, 4, 5}};
    const NoisyDataset nd = inject_asymmetric(clean, groups, 0.3, 5);

    std::map<std::uint32_t, std::uint32_t> succ = {{0, 1}, {1, 2}, {2, 0},
                                                   {3, 4}, {4, 5}, {5, 3}};
    std::map<std::uint32_t, std::size_t> per_class_flips;
    for (std::size_t i = 0; i < nd.dataset.size(); ++i) {
        if (nd.flip_mask[i]) {
            CHECK(nd.dataset.given_labels[i] == succ[nd.dataset.true_labels[i]]);
            ++per_class_flips[nd.dataset.true_labels[i]];
        }
    }
    // floor(0.3 * 10) = 3 flips per class
    for (std::uint32_t c = 0; c < 6; ++c) CHECK(per_class_flips[c] == 3);
}

TEST_CASE("asymmetric noise validates the group partition") {
    const Dataset clean = clean_dataset(4, 5, 2, 1);
    // missing class 3
    CHECK_THROWS_AS(inject_asymmetric(clean, {{0, 1}, {2}}, 0.2, 1), ConfigError);
    // duplicate class
    CHECK_THROWS_AS(inject_asymmetric(clean, {{0, 1}, {1, 2, 3}}, 0.2, 1),
                    ConfigError);
    // out-of-range class id
    CHECK_THROWS_AS(inject_asymmetric(clean, {{0, 1}, {2, 3, 9}}, 0.2, 1),
                    ConfigError);
    // singleton groups are legal: successor of c is c, so nothing can flip
    const NoisyDataset nd =
        inject_asymmetric(clean, {{0}, {1}, {2}, {3}}, 0.5, 1);
    CHECK(count_flips(nd) == 0);
}

TEST_CASE("cifar100 superclass table is a 20x5 partition of 0..99") {
    const auto& groups = cifar100_superclass_groups();
    REQUIRE(groups.size() == 20);
    std::set<std::uint32_t> seen;
    for (const auto& g : groups) {
        REQUIRE(g.size() == 5);
        for (std::uint32_t c = 0; c + 1 < 5; ++c) CHECK(g[c] < g[c + 1]);
        seen.insert(g.begin(), g.end());
    }
    CHECK(seen.size() == 100);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 99);
    // spot-check the aquatic-mammals group
    CHECK(groups[0] == std::vector<std::uint32_t>{4, 30, 55, 72, 95});
}

TEST_CASE("instance noise hits the target flip fraction on a large sample") {
    const Dataset clean = clean_dataset(10, 5000, 8, 23); // N = 50000
    const auto [nd, draw] = inject_instance(clean, 0.4, 0.1, 31);
    REQUIRE(draw.flip_rates.size() == clean.size());

    double mean_q = 0.0;
    for (const double q : draw.flip_rates) {
        CHECK(q >= 0.0);
        CHECK(q <= 1.0);
        mean_q += q;
    }
    mean_q /= static_cast<double>(draw.flip_rates.size());
    CHECK(mean_q == doctest::Approx(0.4).epsilon(0.02));

    const double observed =
        static_cast<double>(count_flips(nd)) / static_cast<double>(clean.size());
    // Flips are Bernoulli(q_i); compare against the realised mean q with a
    // 3-sigma binomial band.
    const double sigma =
        std::sqrt(mean_q * (1.0 - mean_q) / static_cast<double>(clean.size()));
    CHECK(std::abs(observed - mean_q) < 3.0 * sigma + 1e-9);
    CHECK(draw.W.rows == clean.dim);
    CHECK(draw.W.cols == clean.num_classes);
}

TEST_CASE("instance noise is deterministic in the seed") {
    const Dataset clean = clean_dataset(4, 50, 3, 2);
    const auto [a, wa] = inject_instance(clean, 0.3, 0.1, 8);
    const auto [b, wb] = inject_instance(clean, 0.3, 0.1, 8);
    const auto [c, wc] = inject_instance(clean, 0.3, 0.1, 9);
    CHECK(a.dataset.given_labels == b.dataset.given_labels);
    CHECK(wa.flip_rates == wb.flip_rates);
    CHECK(a.dataset.given_labels != c.dataset.given_labels);
}

TEST_CASE("inject dispatches on the spec kind") {
    const Dataset clean = clean_dataset(4, 30, 3, 41);

    NoiseSpec none;
    none.kind = NoiseKind::none;
    const NoisyDataset kept = inject(clean, none);
    CHECK(count_flips(kept) == 0);
    CHECK(kept.dataset.given_labels == clean.given_labels);

    NoiseSpec sym;
    sym.kind = NoiseKind::symmetric;
    sym.ratio = 0.5;
    sym.seed = 4;
    const NoisyDataset s = inject(clean, sym);
    CHECK(count_flips(s) == 60);
    const NoisyDataset direct = inject_symmetric(clean, 0.5, 4);
    CHECK(s.dataset.given_labels == direct.dataset.given_labels);

    NoiseSpec asym;
    asym.kind = NoiseKind::asymmetric;
    asym.ratio = 0.2;
    asym.groups = {{0, 1}, {2, 3}};
    asym.seed = 4;
    const NoisyDataset a = inject(clean, asym);
    CHECK(count_flips(a) == 4 * 6); // floor(0.2*30) = 6 per class

    NoiseSpec inst;
    inst.kind = NoiseKind::instance;
    inst.ratio = 0.3;
    inst.std_dev = 0.1;
    inst.seed = 4;
    const NoisyDataset i = inject(clean, inst);
    const auto [direct_i, unused] = inject_instance(clean, 0.3, 0.1, 4);
    CHECK(i.dataset.given_labels == direct_i.dataset.given_labels);
}

TEST_CASE("noise kind string conversions roundtrip") {
    for (const NoiseKind k : {NoiseKind::none, NoiseKind::symmetric,
                              NoiseKind::asymmetric, NoiseKind::instance}) {
        CHECK(noise_kind_from_string(to_string(k)) == k);
    }
    CHECK_THROWS_AS(noise_kind_from_string("pairflip"), ConfigError);
}
