#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "turnlnl/errors.hpp"
#include "turnlnl/losses.hpp"
#include "turnlnl/rng.hpp"

using namespace turnlnl;

namespace {

// Central finite difference against the analytic dlogits.
template <typename LossFn>
void check_gradient(LossFn loss_fn, std::vector<double> logits) {
    std::vector<double> grad(logits.size());
    loss_fn(logits, grad);
    const double eps = 1e-6;
    for (std::size_t j = 0; j < logits.size(); ++j) {
        std::vector<double> scratch(logits.size());
        auto plus = logits, minus = logits;
        plus[j] += eps;
        minus[j] -= eps;
        const double fd =
            (loss_fn(plus, scratch) - loss_fn(minus, scratch)) / (2.0 * eps);
        const double denom = std::max({std::abs(fd), std::abs(grad[j]), 1e-4});
        CHECK(std::abs(fd - grad[j]) / denom < 1e-5);
    }
}

} // namespace

TEST_CASE("softmax matches hand values and is shift-stable") {
    const double ln3 = std::log(3.0);
    std::vector<double> logits = {0.0, ln3};
    std::vector<double> probs(2);
    softmax_probs(logits, probs);
    CHECK(probs[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(probs[1] == doctest::Approx(0.75).epsilon(1e-12));

    std::vector<double> shifted = {1000.0, 1000.0 + ln3};
    std::vector<double> probs2(2);
    softmax_probs(shifted, probs2);
    CHECK(probs2[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(probs2[1] == doctest::Approx(0.75).epsilon(1e-12));

    std::vector<double> wide = {-2.0, 0.5, 3.0, 3.0};
    std::vector<double> pw(4);
    softmax_probs(wide, pw);
    double sum = 0.0;
    for (const double p : pw) sum += p;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cross entropy on uniform and two-class hand cases") {
    std::vector<double> logits = {0.0, 0.0, 0.0, 0.0};
    std::vector<double> grad(4);
    const double loss = ce_loss_grad(logits, 2, grad);
    CHECK(loss == doctest::Approx(1.3862943611198906).epsilon(1e-12));
    CHECK(grad[2] == doctest::Approx(-0.75).epsilon(1e-12));
    CHECK(grad[0] == doctest::Approx(0.25).epsilon(1e-12));

    std::vector<double> two = {0.0, std::log(3.0)};
    std::vector<double> g2(2);
    ce_loss_grad(two, 0, g2);
    CHECK(g2[0] == doctest::Approx(-0.75).epsilon(1e-12));
    CHECK(g2[1] == doctest::Approx(0.75).epsilon(1e-12));

    // gradient rows always sum to zero
    double sum = 0.0;
    for (const double g : grad) sum += g;
    CHECK(std::abs(sum) < 1e-14);
}

TEST_CASE("cross entropy gradient matches finite differences") {
    Rng rng(31);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t c = 2 + rng.uniform_int(6);
        std::vector<double> logits(c);
        for (auto& l : logits) l = rng.normal() * 2.0;
        const auto label = static_cast<std::uint32_t>(rng.uniform_int(c));
        check_gradient(
            [&](const std::vector<double>& l, std::vector<double>& g) {
                return ce_loss_grad(l, label, g);
            },
            logits);
    }
}

TEST_CASE("gce matches the frozen hand value at p_y = 0.5, q = 0.7") {
    std::vector<double> logits = {0.0, 0.0}; // p = [0.5, 0.5]
    std::vector<double> grad(2);
    const double loss = gce_loss_grad(logits, 0, 0.7, grad);
    CHECK(loss == doctest::Approx(0.5491825618964884).epsilon(1e-12));
    const double pq = 0.6155722066724582; // 0.5^0.7
    CHECK(grad[0] == doctest::Approx(pq * -0.5).epsilon(1e-10));
    CHECK(grad[1] == doctest::Approx(pq * 0.5).epsilon(1e-10));
}

TEST_CASE("gce approaches CE as q -> 0 and is MAE-shaped at q = 1") {
    Rng rng(8);
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> logits(5);
        for (auto& l : logits) l = rng.normal();
        const std::uint32_t label = 3;
        std::vector<double> g_ce(5), g_gce(5);
        const double ce = ce_loss_grad(logits, label, g_ce);
        const double gce = gce_loss_grad(logits, label, 1e-6, g_gce);
        CHECK(gce == doctest::Approx(ce).epsilon(1e-4));

        std::vector<double> probs(5), g1(5);
        softmax_probs(logits, probs);
        const double mae = gce_loss_grad(logits, label, 1.0, g1);
        CHECK(mae == doctest::Approx(1.0 - probs[label]).epsilon(1e-12));
    }
}

TEST_CASE("gce gradient matches finite differences across q") {
    Rng rng(12);
    for (const double q : {0.2, 0.7, 1.0}) {
        for (int rep = 0; rep < 10; ++rep) {
            std::vector<double> logits(4);
            for (auto& l : logits) l = rng.normal() * 1.5;
            const auto label = static_cast<std::uint32_t>(rng.uniform_int(4));
            check_gradient(
                [&](const std::vector<double>& l, std::vector<double>& g) {
                    return gce_loss_grad(l, label, q, g);
                },
                logits);
        }
    }
}

TEST_CASE("gce rejects q outside (0, 1]") {
    std::vector<double> logits = {0.0, 0.0};
    std::vector<double> grad(2);
    CHECK_THROWS_AS(gce_loss_grad(logits, 0, 0.0, grad), ConfigError);
    CHECK_THROWS_AS(gce_loss_grad(logits, 0, -0.3, grad), ConfigError);
    CHECK_THROWS_AS(gce_loss_grad(logits, 0, 1.2, grad), ConfigError);
}

TEST_CASE("elr with lambda = 0 is bitwise cross entropy") {
    Rng rng(44);
    std::vector<double> target = {0.3, 0.3, 0.4};
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> logits(3);
        for (auto& l : logits) l = rng.normal() * 3.0;
        std::vector<double> g_ce(3), g_elr(3);
        const double ce = ce_loss_grad(logits, 1, g_ce);
        const double elr = elr_loss_grad(logits, 1, target, 0.0, g_elr);
        CHECK(elr == ce);
        for (std::size_t j = 0; j < 3; ++j) CHECK(g_elr[j] == g_ce[j]);
    }
}

TEST_CASE("elr regularizer value and gradient match finite differences") {
    Rng rng(45);
    const std::vector<double> target = {0.6, 0.1, 0.3};
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> logits(3);
        for (auto& l : logits) l = rng.normal();
        check_gradient(
            [&](const std::vector<double>& l, std::vector<double>& g) {
                return elr_loss_grad(l, 0, target, 3.0, g);
            },
            logits);

        // value decomposes as CE + lambda * log(1 - <p, t>)
        std::vector<double> probs(3), g(3);
        softmax_probs(logits, probs);
        const double s =
            probs[0] * target[0] + probs[1] * target[1] + probs[2] * target[2];
        const double expect =
            ce_loss_grad(logits, 0, g) + 3.0 * std::log(std::max(1.0 - s, 1e-6));
        CHECK(elr_loss_grad(logits, 0, target, 3.0, g) ==
              doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("elr target rows move toward probs under the beta average") {
    ElrState state(2, 2, 0.49, 3.0);
    CHECK(state.targets.at(0, 0) == 0.0);
    const std::vector<double> probs = {1.0, 0.0};
    state.update_targets(probs, 0);
    CHECK(state.targets.at(0, 0) == doctest::Approx(0.51).epsilon(1e-12));
    CHECK(state.targets.at(0, 1) == 0.0);
    // other rows untouched
    CHECK(state.targets.at(1, 0) == 0.0);

    state.update_targets(probs, 0);
    CHECK(state.targets.at(0, 0) ==
          doctest::Approx(0.49 * 0.51 + 0.51).epsilon(1e-12));
}

TEST_CASE("elr clamp counter fires when <p, t> saturates") {
    reset_elr_clamp_count();
    CHECK(elr_clamp_count() == 0);
    std::vector<double> logits = {100.0, 0.0}; // p ~ [1, 4e-44]
    const std::vector<double> target = {1.0, 0.0};
    std::vector<double> grad(2);
    elr_loss_grad(logits, 0, target, 3.0, grad);
    CHECK(elr_clamp_count() == 1);
    for (const double g : grad) CHECK(std::isfinite(g));
    elr_loss_grad(logits, 0, target, 3.0, grad);
    CHECK(elr_clamp_count() == 2);
    reset_elr_clamp_count();
    CHECK(elr_clamp_count() == 0);
}

TEST_CASE("losses reject non-finite logits") {
    std::vector<double> logits = {0.0, std::numeric_limits<double>::quiet_NaN()};
    std::vector<double> grad(2);
    const std::vector<double> target = {0.5, 0.5};
    CHECK_THROWS_AS(ce_loss_grad(logits, 0, grad), NumericError);
    CHECK_THROWS_AS(gce_loss_grad(logits, 0, 0.7, grad), NumericError);
    CHECK_THROWS_AS(elr_loss_grad(logits, 0, target, 3.0, grad), NumericError);
    logits[1] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(ce_loss_grad(logits, 0, grad), NumericError);
}
