#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "turnlnl/dataset.hpp"
#include "turnlnl/errors.hpp"
#include "turnlnl/losses.hpp"
#include "turnlnl/model.hpp"
#include "turnlnl/rng.hpp"
#include "turnlnl/select.hpp"

using namespace turnlnl;

namespace {

std::vector<double> two_cluster_values(std::size_t n_low, double mu_low,
                                       std::size_t n_high, double mu_high,
                                       double sigma, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v;
    v.reserve(n_low + n_high);
    for (std::size_t i = 0; i < n_low; ++i) v.push_back(mu_low + sigma * rng.normal());
    for (std::size_t i = 0; i < n_high; ++i) v.push_back(mu_high + sigma * rng.normal());
    return v;
}

LossVector make_losses(std::vector<double> values) {
    LossVector lv;
    if (!values.empty()) {
        lv.min_value = *std::min_element(values.begin(), values.end());
        lv.max_value = *std::max_element(values.begin(), values.end());
    }
    lv.values = std::move(values);
    return lv;
}

} // namespace

TEST_CASE("normalized maps losses onto [0,1] with the recorded extremes") {
    const LossVector lv = make_losses({2.0, 4.0, 3.0});
    const auto nv = lv.normalized();
    CHECK(nv[0] == 0.0);
    CHECK(nv[1] == 1.0);
    CHECK(nv[2] == doctest::Approx(0.5).epsilon(1e-15));

    const LossVector flat = make_losses({1.5, 1.5, 1.5});
    for (const double v : flat.normalized()) CHECK(v == 0.0);
}

TEST_CASE("per-sample losses are ln C under a zero head") {
    auto [ext, head] = init_model(3, 4, 2, 5, 1);
    SyntheticSpec spec;
    spec.num_classes = 5;
    spec.input_dim = 3;
    spec.per_class_train = 4;
    spec.per_class_test = 1;
    spec.per_class_pretrain = 1;
    spec.separation = 1.0;
    spec.seed = 2;
    const Dataset data = generate_synthetic(spec).train;
    const LossVector lv = per_sample_losses(ext, head, data.inputs.data(),
                                            data.dim, data.given_labels,
                                            data.size());
    REQUIRE(lv.values.size() == data.size());
    for (const double v : lv.values)
        CHECK(v == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    CHECK(lv.min_value == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    CHECK(lv.max_value == doctest::Approx(std::log(5.0)).epsilon(1e-12));
}

TEST_CASE("per-sample losses match a naive re-evaluation row by row") {
    auto [ext, head] = init_model(4, 6, 3, 3, 7);
    Rng rng(8);
    for (auto& w : head.W.data) w = rng.normal();
    SyntheticSpec spec;
    spec.num_classes = 3;
    spec.input_dim = 4;
    spec.per_class_train = 100;
    spec.per_class_test = 1;
    spec.per_class_pretrain = 1;
    spec.separation = 2.0;
    spec.seed = 9;
    const Dataset data = generate_synthetic(spec).train; // forces chunking

    const LossVector lv = per_sample_losses(ext, head, data.inputs.data(),
                                            data.dim, data.given_labels,
                                            data.size());
    ForwardCache cache;
    std::vector<double> row(3), grad(3);
    for (std::size_t i = 0; i < data.size(); ++i) {
        const Matrix logits =
            forward(ext, head, data.row(i), 1, data.dim, TuningMode::LP, cache);
        for (std::size_t c = 0; c < 3; ++c) row[c] = logits.at(0, c);
        const double expect = ce_loss_grad(row, data.given_labels[i], grad);
        CHECK(std::abs(lv.values[i] - expect) < 1e-10);
    }
}

TEST_CASE("EM recovers a well separated two-component mixture") {
    const auto values = two_cluster_values(300, 0.1, 200, 0.8, 0.03, 11);
    SelectionConfig cfg;
    const Gmm1D g = fit_gmm1d(values, cfg);
    CHECK(g.mean[0] == doctest::Approx(0.1).epsilon(0.02));
    CHECK(g.mean[1] == doctest::Approx(0.8).epsilon(0.02));
    CHECK(g.weight[0] == doctest::Approx(0.6).epsilon(0.05));
    CHECK(g.weight[1] == doctest::Approx(0.4).epsilon(0.05));
    CHECK(g.mean[0] < g.mean[1]);
    CHECK_FALSE(g.degenerate());
    CHECK(g.converged);
}

TEST_CASE("EM log-likelihood trace never decreases") {
    SelectionConfig cfg;
    Rng rng(21);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> values(60);
        for (auto& v : values) v = rng.uniform();
        const Gmm1D g = fit_gmm1d(values, cfg);
        REQUIRE(!g.ll_trace.empty());
        for (std::size_t i = 1; i < g.ll_trace.size(); ++i)
            CHECK(g.ll_trace[i] >= g.ll_trace[i - 1] - 1e-7);
    }
}

TEST_CASE("EM on two point masses puts one component on each") {
    std::vector<double> values;
    for (int i = 0; i < 30; ++i) values.push_back(0.0);
    for (int i = 0; i < 10; ++i) values.push_back(1.0);
    SelectionConfig cfg;
    const Gmm1D g = fit_gmm1d(values, cfg);
    CHECK(g.mean[0] == doctest::Approx(0.0).epsilon(1e-3));
    CHECK(g.mean[1] == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(g.weight[0] == doctest::Approx(0.75).epsilon(0.01));
}

TEST_CASE("identical values give a degenerate fit") {
    const std::vector<double> values(25, 0.4);
    SelectionConfig cfg;
    const Gmm1D g = fit_gmm1d(values, cfg);
    CHECK(g.degenerate());
    CHECK(g.mean[0] == g.mean[1]);
}

TEST_CASE("fit_gmm1d rejects empty input") {
    SelectionConfig cfg;
    CHECK_THROWS_AS(fit_gmm1d(std::vector<double>{}, cfg), ConfigError);
}

TEST_CASE("posterior of the low component behaves like a soft threshold") {
    Gmm1D g;
    g.mean[0] = 0.2;
    g.mean[1] = 0.8;
    g.var[0] = g.var[1] = 0.01;
    g.weight[0] = g.weight[1] = 0.5;
    CHECK(posterior_low(g, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(posterior_low(g, 0.2) > 0.999);
    CHECK(posterior_low(g, 0.8) < 0.001);
    for (const double v : {0.0, 0.3, 0.5, 0.9}) {
        const double p = posterior_low(g, v);
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }
    // extreme values stay finite thanks to the log-space evaluation
    CHECK(posterior_low(g, 1e6) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(posterior_low(g, -1e6) == doctest::Approx(1.0).epsilon(1e-12));

    Gmm1D deg;
    deg.mean[0] = deg.mean[1] = 0.5;
    CHECK_THROWS_AS(posterior_low(deg, 0.5), std::logic_error);
}

TEST_CASE("select_clean splits an easy two-cluster loss profile correctly") {
    // class 0: rows 0..4 (losses: three low, two high)
    // class 1: rows 5..9 (losses: three low, two high)
    const LossVector lv = make_losses(
        {0.01, 0.02, 0.03, 0.9, 0.95, 0.02, 0.01, 0.04, 0.92, 0.88});
    const std::vector<std::uint32_t> labels = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    SelectionConfig cfg;
    cfg.tau = 0.6;
    cfg.min_class_fit = 20; // too few rows per class: global fit is used
    cfg.seed = 3;
    const SelectionResult sel = select_clean(lv, labels, 2, cfg);
    REQUIRE(sel.class_candidates.size() == 2);
    CHECK(sel.class_candidates[0] == 3);
    CHECK(sel.class_candidates[1] == 3);
    CHECK(sel.per_class_n == 3);
    REQUIRE(sel.indices.size() == 6);
    const std::set<std::uint32_t> chosen(sel.indices.begin(), sel.indices.end());
    const std::set<std::uint32_t> expect = {0, 1, 2, 5, 6, 7};
    CHECK(chosen == expect);
    // grouped by class, ascending inside the group
    CHECK(std::is_sorted(sel.indices.begin(), sel.indices.begin() + 3));
    CHECK(std::is_sorted(sel.indices.begin() + 3, sel.indices.end()));
    for (std::size_t i = 0; i < 3; ++i) CHECK(labels[sel.indices[i]] == 0);
    for (std::size_t i = 3; i < 6; ++i) CHECK(labels[sel.indices[i]] == 1);
}

TEST_CASE("unbalanced candidates shrink every class to the minimum N") {
    // class 0 has 5 clean rows, class 1 has 3
    const LossVector lv = make_losses({0.01, 0.02, 0.03, 0.02, 0.01,
                                       0.02, 0.03, 0.01, 0.9, 0.95});
    const std::vector<std::uint32_t> labels = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    SelectionConfig cfg;
    cfg.seed = 4;
    const SelectionResult sel = select_clean(lv, labels, 2, cfg);
    CHECK(sel.class_candidates[0] == 5);
    CHECK(sel.class_candidates[1] == 3);
    CHECK(sel.per_class_n == 3);
    CHECK(sel.indices.size() == 6);
    std::map<std::uint32_t, int> per_class;
    for (const auto i : sel.indices) ++per_class[labels[i]];
    CHECK(per_class[0] == 3);
    CHECK(per_class[1] == 3);
}

TEST_CASE("identical losses fall back to singletons with N = 1") {
    const LossVector lv = make_losses(std::vector<double>(12, 0.5));
    const std::vector<std::uint32_t> labels = {0, 0, 0, 0, 1, 1, 1, 1, 2, 2, 2, 2};
    SelectionConfig cfg;
    cfg.seed = 5;
    const SelectionResult sel = select_clean(lv, labels, 3, cfg);
    // degenerate global fit, below-mean rule selects nothing (no strict
    // below), every class falls back to its lowest-loss row
    CHECK(sel.per_class_n == 1);
    CHECK(sel.indices.size() == 3);
    for (std::size_t c = 0; c < 3; ++c) {
        CHECK(sel.fallbacks[c].empty_class);
        CHECK(labels[sel.indices[c]] == c);
    }
}

TEST_CASE("tau = 0 keeps every row when clusters are split evenly") {
    // overlapping clusters keep every posterior strictly positive
    const auto values = two_cluster_values(40, 0.3, 40, 0.7, 0.08, 31);
    std::vector<std::uint32_t> labels(values.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2;
    const LossVector lv = make_losses(values);
    SelectionConfig cfg;
    cfg.tau = 0.0;
    cfg.min_class_fit = 100; // force the global fit
    cfg.seed = 6;
    const SelectionResult sel = select_clean(lv, labels, 2, cfg);
    // posterior_low > 0 everywhere, so every row is a candidate
    CHECK(sel.class_candidates[0] == 40);
    CHECK(sel.class_candidates[1] == 40);
    CHECK(sel.per_class_n == 40);
    CHECK(sel.indices.size() == 80);
}

TEST_CASE("candidate counts shrink monotonically in tau") {
    const auto values = two_cluster_values(120, 0.15, 80, 0.75, 0.12, 41);
    std::vector<std::uint32_t> labels(values.size(), 0);
    const LossVector lv = make_losses(values);
    std::size_t prev = values.size() + 1;
    for (const double tau : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        SelectionConfig cfg;
        cfg.tau = tau;
        cfg.min_class_fit = 20;
        cfg.seed = 7;
        const SelectionResult sel = select_clean(lv, labels, 1, cfg);
        CHECK(sel.class_candidates[0] <= prev);
        prev = sel.class_candidates[0];
    }
}

TEST_CASE("selection is invariant to affine rescaling of the losses") {
    const auto base = two_cluster_values(60, 0.2, 60, 0.8, 0.05, 51);
    std::vector<std::uint32_t> labels(base.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 3;
    std::vector<double> scaled(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) scaled[i] = 100.0 + 7.0 * base[i];

    SelectionConfig cfg;
    cfg.seed = 8;
    const SelectionResult a = select_clean(make_losses(base), labels, 3, cfg);
    const SelectionResult b = select_clean(make_losses(scaled), labels, 3, cfg);
    CHECK(a.indices == b.indices);
    CHECK(a.per_class_n == b.per_class_n);
}

TEST_CASE("selection subsample is deterministic in the seed") {
    const auto values = two_cluster_values(100, 0.1, 50, 0.9, 0.05, 61);
    std::vector<std::uint32_t> labels(values.size());
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = i % 2;
    const LossVector lv = make_losses(values);
    SelectionConfig cfg;
    cfg.seed = 9;
    const SelectionResult a = select_clean(lv, labels, 2, cfg);
    const SelectionResult b = select_clean(lv, labels, 2, cfg);
    CHECK(a.indices == b.indices);
    cfg.seed = 10;
    const SelectionResult c = select_clean(lv, labels, 2, cfg);
    // same candidate pools, but a different draw when subsampling applies
    CHECK(a.class_candidates == c.class_candidates);
}

TEST_CASE("select_clean validates its inputs") {
    const LossVector lv = make_losses({0.1, 0.9});
    const std::vector<std::uint32_t> labels = {0, 1};
    SelectionConfig cfg;
    CHECK_THROWS_AS(select_clean(lv, labels, 0, cfg), ConfigError);
    CHECK_THROWS_AS(select_clean(make_losses({}), labels, 2, cfg), ConfigError);
    SelectionConfig bad_tau;
    bad_tau.tau = 1.0;
    CHECK_THROWS_AS(select_clean(lv, labels, 2, bad_tau), ConfigError);
    bad_tau.tau = -0.2;
    CHECK_THROWS_AS(select_clean(lv, labels, 2, bad_tau), ConfigError);
    const std::vector<std::uint32_t> out_of_range = {0, 5};
    CHECK_THROWS_AS(select_clean(lv, out_of_range, 2, cfg), std::logic_error);
    // a class with no rows at all is a data problem
    const std::vector<std::uint32_t> missing_class = {0, 0};
    CHECK_THROWS_AS(select_clean(lv, missing_class, 2, cfg), DataError);
}

TEST_CASE("selection purity counts matches among known true labels") {
    const std::vector<std::uint32_t> given = {0, 0, 1, 1};
    const std::vector<std::uint32_t> truth = {0, 1, 1, 1};
    const std::vector<std::uint32_t> all = {0, 1, 2, 3};
    const auto p = selection_purity(all, given, truth);
    REQUIRE(p.has_value());
    CHECK(*p == doctest::Approx(0.75).epsilon(1e-15));

    const std::vector<std::uint32_t> clean_only = {0, 2, 3};
    CHECK(*selection_purity(clean_only, given, truth) == 1.0);

    // unknown sentinels are skipped
    const std::vector<std::uint32_t> truth2 = {0, kUnknownLabel, 1, kUnknownLabel};
    const auto p2 = selection_purity(all, given, truth2);
    REQUIRE(p2.has_value());
    CHECK(*p2 == 1.0);

    const std::vector<std::uint32_t> all_unknown(4, kUnknownLabel);
    CHECK_FALSE(selection_purity(all, given, all_unknown).has_value());
    CHECK_FALSE(selection_purity(all, given, {}).has_value());
}

TEST_CASE("dump lines are one CSV row per class") {
    const LossVector lv = make_losses(
        {0.01, 0.02, 0.03, 0.9, 0.95, 0.02, 0.01, 0.04, 0.92, 0.88});
    const std::vector<std::uint32_t> labels = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1};
    SelectionConfig cfg;
    cfg.seed = 3;
    const SelectionResult sel = select_clean(lv, labels, 2, cfg);
    const std::string dump =
        selection_dump_lines(4, sel, labels, labels, 2);
    std::istringstream in(dump);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        CHECK(line.rfind("4,", 0) == 0); // epoch prefix
        CHECK(std::count(line.begin(), line.end(), ',') == 4);
        ++rows;
    }
    CHECK(rows == 2);

    // unknown truth -> per-class purity renders as "na"
    std::vector<std::uint32_t> unknown(10, kUnknownLabel);
    const std::string dump2 = selection_dump_lines(0, sel, labels, unknown, 2);
    CHECK(dump2.find("na") != std::string::npos);
}
