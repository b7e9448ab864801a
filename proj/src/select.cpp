#include "turnlnl/select.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "turnlnl/dataset.hpp"
#include "turnlnl/errors.hpp"
#include "turnlnl/losses.hpp"
#include "turnlnl/rng.hpp"

namespace turnlnl {

namespace {

constexpr std::uint64_t kSelectStreamBase = 53;

double quantile_sorted(const std::vector<double>& sorted, double q) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double pos = q * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

} // namespace

std::vector<double> LossVector::normalized() const {
    std::vector<double> out(values.size(), 0.0);
    const double range = max_value - min_value;
    if (range > 0.0) {
        for (std::size_t i = 0; i < values.size(); ++i)
            out[i] = (values[i] - min_value) / range;
    }
    return out;
}

LossVector per_sample_losses(const Extractor& ext, const LinearHead& head,
                             const float* inputs, std::size_t width,
                             std::span<const std::uint32_t> labels,
                             std::size_t rows) {
    if (rows == 0) throw std::logic_error("per_sample_losses on empty set");
    const std::size_t num_classes = head.W.rows;
    LossVector out;
    out.values.resize(rows);
    ForwardCache cache;
    std::vector<double> scratch(num_classes);
    const std::size_t chunk = 256;
    for (std::size_t start = 0; start < rows; start += chunk) {
        const std::size_t b = std::min(chunk, rows - start);
        const Matrix logits = forward(ext, head, inputs + start * width, b, width,
                                      TuningMode::LP, cache);
        for (std::size_t r = 0; r < b; ++r) {
            const std::span<const double> row(logits.data.data() + r * num_classes,
                                              num_classes);
            out.values[start + r] = ce_loss_grad(row, labels[start + r], scratch);
        }
    }
    const auto [lo, hi] = std::minmax_element(out.values.begin(), out.values.end());
    out.min_value = *lo;
    out.max_value = *hi;
    return out;
}

Gmm1D fit_gmm1d(std::span<const double> values, const SelectionConfig& cfg) {
    if (values.empty()) throw ConfigError("fit_gmm1d needs at least one value");
    const std::size_t n = values.size();
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());

    Gmm1D g;
    if (sorted.back() - sorted.front() < 1e-12) {
        g.mean[0] = g.mean[1] = sorted.front();
        return g;
    }

    double mu[2] = {quantile_sorted(sorted, 0.1), quantile_sorted(sorted, 0.9)};
    double vsum = 0.0, vsq = 0.0;
    for (double v : values) {
        vsum += v;
        vsq += v * v;
    }
    const double mean_all = vsum / static_cast<double>(n);
    double var[2];
    var[0] = var[1] =
        std::max(vsq / static_cast<double>(n) - mean_all * mean_all, 1e-6);
    double w[2] = {0.5, 0.5};

    std::vector<double> resp_low(n);
    double ll_old = -std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < cfg.max_iters; ++it) {
        double ll = 0.0;
        double nk[2] = {0.0, 0.0};
        double sum_v[2] = {0.0, 0.0};
        for (std::size_t i = 0; i < n; ++i) {
            const double v = values[i];
            double lp[2];
            for (int k = 0; k < 2; ++k) {
                const double d = v - mu[k];
                lp[k] = -0.5 * std::log(2.0 * std::numbers::pi * var[k]) -
                        d * d / (2.0 * var[k]) + std::log(w[k]);
            }
            const double mx = std::max(lp[0], lp[1]);
            const double lse = mx + std::log(std::exp(lp[0] - mx) + std::exp(lp[1] - mx));
            ll += lse;
            const double r0 = std::exp(lp[0] - lse);
            resp_low[i] = r0;
            nk[0] += r0;
            nk[1] += 1.0 - r0;
            sum_v[0] += r0 * v;
            sum_v[1] += (1.0 - r0) * v;
        }
        g.ll_trace.push_back(ll);
        if (nk[0] < 1e-10 || nk[1] < 1e-10) break;
        for (int k = 0; k < 2; ++k) {
            w[k] = nk[k] / static_cast<double>(n);
            mu[k] = sum_v[k] / nk[k];
        }
        double ss[2] = {0.0, 0.0};
        for (std::size_t i = 0; i < n; ++i) {
            const double d0 = values[i] - mu[0];
            const double d1 = values[i] - mu[1];
            ss[0] += resp_low[i] * d0 * d0;
            ss[1] += (1.0 - resp_low[i]) * d1 * d1;
        }
        for (int k = 0; k < 2; ++k) var[k] = std::max(ss[k] / nk[k], 1e-6);
        g.iters = it + 1;
        if (it > 0 && ll - ll_old < cfg.tol) {
            g.converged = true;
            break;
        }
        ll_old = ll;
    }

    const int lo = mu[0] <= mu[1] ? 0 : 1;
    const int hi = 1 - lo;
    g.mean[0] = mu[lo];
    g.mean[1] = mu[hi];
    g.var[0] = var[lo];
    g.var[1] = var[hi];
    g.weight[0] = w[lo];
    g.weight[1] = w[hi];
    return g;
}

double posterior_low(const Gmm1D& gmm, double v) {
    if (gmm.degenerate()) throw std::logic_error("posterior_low on degenerate fit");
    double lp[2];
    for (int k = 0; k < 2; ++k) {
        const double d = v - gmm.mean[k];
        lp[k] = -0.5 * std::log(2.0 * std::numbers::pi * gmm.var[k]) -
                d * d / (2.0 * gmm.var[k]) + std::log(gmm.weight[k]);
    }
    return 1.0 / (1.0 + std::exp(lp[1] - lp[0]));
}

SelectionResult select_clean(const LossVector& losses,
                             std::span<const std::uint32_t> given_labels,
                             std::size_t num_classes, const SelectionConfig& cfg) {
    if (num_classes == 0) throw ConfigError("select_clean needs at least one class");
    if (losses.values.empty()) throw ConfigError("select_clean on empty dataset");
    if (losses.values.size() != given_labels.size())
        throw std::logic_error("losses/labels length mismatch");
    if (cfg.tau < 0.0 || cfg.tau >= 1.0) throw ConfigError("tau must be in [0, 1)");

    const std::vector<double> nv = losses.normalized();
    std::vector<std::vector<std::uint32_t>> members(num_classes);
    for (std::size_t i = 0; i < given_labels.size(); ++i) {
        if (given_labels[i] >= num_classes)
            throw std::logic_error("given label out of range in select_clean");
        members[given_labels[i]].push_back(static_cast<std::uint32_t>(i));
    }
    for (std::size_t c = 0; c < num_classes; ++c) {
        if (members[c].empty())
            throw DataError("class " + std::to_string(c) + " has no samples");
    }

    const Gmm1D global_fit = fit_gmm1d(nv, cfg);

    SelectionResult result;
    result.class_candidates.resize(num_classes);
    result.fallbacks.resize(num_classes);
    std::vector<std::vector<std::uint32_t>> candidates(num_classes);
    std::vector<double> class_values;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const auto& rows = members[c];
        class_values.clear();
        for (std::uint32_t i : rows) class_values.push_back(nv[i]);
        Gmm1D fit = global_fit;
        if (cfg.per_class && rows.size() >= cfg.min_class_fit)
            fit = fit_gmm1d(class_values, cfg);
        if (fit.degenerate()) {
            result.fallbacks[c].degenerate_fit = true;
            double mean = 0.0;
            for (double v : class_values) mean += v;
            mean /= static_cast<double>(rows.size());
            for (std::size_t k = 0; k < rows.size(); ++k) {
                if (class_values[k] < mean) candidates[c].push_back(rows[k]);
            }
        } else {
            for (std::size_t k = 0; k < rows.size(); ++k) {
                if (posterior_low(fit, class_values[k]) > cfg.tau)
                    candidates[c].push_back(rows[k]);
            }
        }
        result.class_candidates[c] = candidates[c].size();
    }

    bool any_empty = false;
    for (const auto& cand : candidates) any_empty = any_empty || cand.empty();
    if (any_empty) {
        result.per_class_n = 1;
        for (std::size_t c = 0; c < num_classes; ++c) {
            if (!candidates[c].empty()) continue;
            result.fallbacks[c].empty_class = true;
            std::uint32_t best = members[c][0];
            for (std::uint32_t i : members[c]) {
                if (nv[i] < nv[best]) best = i;
            }
            candidates[c].push_back(best);
        }
    } else {
        std::size_t n = candidates[0].size();
        for (const auto& cand : candidates) n = std::min(n, cand.size());
        result.per_class_n = n;
    }

    for (std::size_t c = 0; c < num_classes; ++c) {
        Rng rng(cfg.seed, kSelectStreamBase + c);
        const auto picks =
            rng.sample_without_replacement(candidates[c].size(), result.per_class_n);
        std::vector<std::uint32_t> chosen;
        chosen.reserve(picks.size());
        for (std::size_t p : picks) chosen.push_back(candidates[c][p]);
        std::sort(chosen.begin(), chosen.end());
        result.indices.insert(result.indices.end(), chosen.begin(), chosen.end());
    }
    return result;
}

std::optional<double> selection_purity(std::span<const std::uint32_t> indices,
                                       std::span<const std::uint32_t> given_labels,
                                       std::span<const std::uint32_t> true_labels) {
    if (true_labels.empty()) return std::nullopt;
    std::size_t known = 0, match = 0;
    for (std::uint32_t i : indices) {
        if (true_labels[i] == kUnknownLabel) continue;
        ++known;
        if (given_labels[i] == true_labels[i]) ++match;
    }
    if (known == 0) return std::nullopt;
    return static_cast<double>(match) / static_cast<double>(known);
}

std::string selection_dump_lines(std::size_t epoch, const SelectionResult& sel,
                                 std::span<const std::uint32_t> given_labels,
                                 std::span<const std::uint32_t> true_labels,
                                 std::size_t num_classes) {
    std::ostringstream out;
    const std::size_t n = sel.per_class_n;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const std::span<const std::uint32_t> rows(sel.indices.data() + c * n, n);
        const auto p = selection_purity(rows, given_labels, true_labels);
        out << epoch << ',' << c << ',' << sel.class_candidates[c] << ',' << n << ',';
        if (p.has_value())
            out << *p;
        else
            out << "na";
        out << '\n';
    }
    return out.str();
}

} // namespace turnlnl
