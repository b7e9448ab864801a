#include "turnlnl/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "turnlnl/errors.hpp"
#include "turnlnl/losses.hpp"
#include "turnlnl/rng.hpp"

namespace turnlnl {

namespace {

constexpr std::uint64_t kLpShuffleStream = 61;
constexpr std::uint64_t kFftShuffleStream = 67;
constexpr std::uint64_t kPretrainStream = 71;
constexpr std::uint64_t kSelectSeedOffset = 50;

class Timer {
public:
    Timer() : t0_(std::chrono::steady_clock::now()) {}
    double ms() const {
        const auto dt = std::chrono::steady_clock::now() - t0_;
        return std::chrono::duration<double, std::milli>(dt).count();
    }

private:
    std::chrono::steady_clock::time_point t0_;
};

std::vector<std::uint32_t> all_indices(std::size_t n) {
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    return idx;
}

double per_row_loss(const LossSpec& loss, std::span<const double> logits,
                    std::uint32_t label, std::uint32_t row,
                    std::span<double> dlogits) {
    switch (loss.kind) {
        case LossKind::ce:
            return ce_loss_grad(logits, label, dlogits);
        case LossKind::gce:
            return gce_loss_grad(logits, label, loss.q, dlogits);
        case LossKind::elr: {
            const std::size_t c = logits.size();
            const std::span<const double> target(
                loss.elr->targets.data.data() + static_cast<std::size_t>(row) * c, c);
            return elr_loss_grad(logits, label, target, loss.elr->lambda, dlogits);
        }
    }
    throw std::logic_error("bad LossKind");
}

/// One epoch of head-only training on cached features.
EpochStats head_epoch(LinearHead& head, const Matrix& feats,
                      std::span<const std::uint32_t> labels,
                      std::span<const std::uint32_t> indices, const LossSpec& loss,
                      Optimizer& opt, std::size_t slot_w, std::size_t slot_b,
                      std::size_t batch_size, Rng& rng) {
    const std::size_t num_classes = head.W.rows;
    const std::size_t f = head.W.cols;
    std::vector<std::uint32_t> order(indices.begin(), indices.end());
    rng.shuffle(order);

    std::vector<double> logits(num_classes), dlogits(num_classes), probs(num_classes);
    Matrix dW(num_classes, f);
    std::vector<double> db(num_classes);
    std::vector<std::uint32_t> batch_rows;
    double loss_sum = 0.0;
    std::size_t correct = 0;

    const std::size_t n = order.size();
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t b = std::min(batch_size, n - start);
        dW.fill(0.0);
        std::fill(db.begin(), db.end(), 0.0);
        batch_rows.assign(order.begin() + start, order.begin() + start + b);
        const double scale = 1.0 / static_cast<double>(b);
        for (std::uint32_t row : batch_rows) {
            const double* z = feats[row];
            for (std::size_t c = 0; c < num_classes; ++c) {
                double acc = head.b[c];
                const double* w = head.W[c];
                for (std::size_t k = 0; k < f; ++k) acc += w[k] * z[k];
                logits[c] = acc;
            }
            loss_sum += per_row_loss(loss, logits, labels[row], row, dlogits);
            std::size_t arg = 0;
            for (std::size_t c = 1; c < num_classes; ++c) {
                if (logits[c] > logits[arg]) arg = c;
            }
            if (arg == labels[row]) ++correct;
            if (loss.kind == LossKind::elr) {
                softmax_probs(logits, probs);
                loss.elr->update_targets(probs, row);
            }
            for (std::size_t c = 0; c < num_classes; ++c) {
                const double d = dlogits[c] * scale;
                db[c] += d;
                double* dw = dW[c];
                for (std::size_t k = 0; k < f; ++k) dw[k] += d * z[k];
            }
        }
        opt.begin_step();
        opt.update(slot_w, head.W.data, dW.data);
        opt.update(slot_b, head.b, db);
    }

    EpochStats stats;
    stats.mean_loss = loss_sum / static_cast<double>(n);
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return stats;
}

double head_eval(const LinearHead& head, const Matrix& feats,
                 std::span<const std::uint32_t> labels) {
    const std::size_t num_classes = head.W.rows;
    const std::size_t f = head.W.cols;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < feats.rows; ++i) {
        const double* z = feats[i];
        std::size_t arg = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < num_classes; ++c) {
            double acc = head.b[c];
            const double* w = head.W[c];
            for (std::size_t k = 0; k < f; ++k) acc += w[k] * z[k];
            if (acc > best) {
                best = acc;
                arg = c;
            }
        }
        if (arg == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(feats.rows);
}

void finalize(RunReport& rep) {
    double best = 0.0, total = 0.0;
    for (const auto& r : rep.epochs) {
        best = std::max(best, r.test_acc);
        total += r.wall_ms;
    }
    rep.best_acc = best;
    rep.last_acc = rep.epochs.empty() ? 0.0 : rep.epochs.back().test_acc;
    rep.total_wall_ms = total;
}

} // namespace

std::string to_string(CleansingMode mode) {
    switch (mode) {
        case CleansingMode::multiple: return "multiple";
        case CleansingMode::once: return "once";
        case CleansingMode::none: return "none";
    }
    throw std::logic_error("bad CleansingMode");
}

CleansingMode cleansing_mode_from_string(const std::string& s) {
    if (s == "multiple") return CleansingMode::multiple;
    if (s == "once") return CleansingMode::once;
    if (s == "none") return CleansingMode::none;
    throw ConfigError("unknown cleansing mode: " + s);
}

void TurnConfig::validate() const {
    if (!(gce_q > 0.0) || gce_q > 1.0) throw ConfigError("gce q must be in (0, 1]");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (selection.tau < 0.0 || selection.tau >= 1.0)
        throw ConfigError("tau must be in [0, 1)");
}

void BaselineConfig::validate() const {
    if (!(gce_q > 0.0) || gce_q > 1.0) throw ConfigError("gce q must be in (0, 1]");
    if (elr_beta < 0.0 || elr_beta >= 1.0)
        throw ConfigError("elr beta must be in [0, 1)");
    if (elr_lambda < 0.0) throw ConfigError("elr lambda must be >= 0");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
}

double evaluate(const Extractor& ext, const LinearHead& head, const Dataset& ds) {
    if (ds.size() == 0) throw ConfigError("evaluate on an empty dataset");
    return evaluate_accuracy(ext, head, ds.inputs.data(), ds.dim, ds.given_labels,
                             ds.size());
}

Matrix extract_features(const Extractor& ext, const Dataset& ds) {
    if (ds.size() == 0) throw ConfigError("extract_features on an empty dataset");
    LinearHead probe;
    probe.W = Matrix(1, ext.out_dim);
    probe.b.assign(1, 0.0);
    Matrix out(ds.size(), ext.out_dim);
    ForwardCache cache;
    const std::size_t chunk = 256;
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        const std::size_t b = std::min(chunk, ds.size() - start);
        forward(ext, probe, ds.row(start), b, ds.dim, TuningMode::LP, cache);
        std::copy(cache.z.data.begin(), cache.z.data.begin() + b * ext.out_dim,
                  out.data.begin() + start * ext.out_dim);
    }
    return out;
}

LossVector head_losses(const LinearHead& head, const Matrix& feats,
                       std::span<const std::uint32_t> labels) {
    if (feats.rows == 0) throw std::logic_error("head_losses on empty features");
    const std::size_t num_classes = head.W.rows;
    const std::size_t f = head.W.cols;
    LossVector out;
    out.values.resize(feats.rows);
    std::vector<double> logits(num_classes), scratch(num_classes);
    for (std::size_t i = 0; i < feats.rows; ++i) {
        const double* z = feats[i];
        for (std::size_t c = 0; c < num_classes; ++c) {
            double acc = head.b[c];
            const double* w = head.W[c];
            for (std::size_t k = 0; k < f; ++k) acc += w[k] * z[k];
            logits[c] = acc;
        }
        out.values[i] = ce_loss_grad(logits, labels[i], scratch);
    }
    const auto [lo, hi] = std::minmax_element(out.values.begin(), out.values.end());
    out.min_value = *lo;
    out.max_value = *hi;
    return out;
}

void pretrain_extractor(Extractor& ext, const Dataset& pretrain, std::uint64_t seed) {
    if (pretrain.size() == 0) throw ConfigError("pretrain set is empty");
    LinearHead tmp;
    tmp.W = Matrix(pretrain.num_classes, ext.out_dim);
    tmp.b.assign(pretrain.num_classes, 0.0);
    OptimSpec spec{OptimKind::adamw, 1e-3, 0.0, 0.0};
    auto opt = make_optimizer(spec);
    BoundParams bound = bind_model_params(*opt, ext, tmp, TuningMode::FFT);
    Rng rng(seed, kPretrainStream);
    const auto idx = all_indices(pretrain.size());
    LossSpec loss;
    for (std::size_t e = 0; e < 10; ++e) {
        train_epoch(ext, tmp, pretrain.inputs.data(), pretrain.dim,
                    pretrain.given_labels, idx, TuningMode::FFT, loss, *opt, bound,
                    128, rng);
    }
}

Matrix run_lp(const Extractor& ext, LinearHead& head, const Dataset& train,
              const TurnConfig& cfg) {
    cfg.validate();
    Matrix feats = extract_features(ext, train);
    if (cfg.e_lp == 0) return feats;
    auto opt = make_optimizer(cfg.lp_optim);
    const std::size_t slot_w = opt->register_param(head.W.data.size());
    const std::size_t slot_b = opt->register_param(head.b.size());
    Rng rng(cfg.seed, kLpShuffleStream);
    const auto idx = all_indices(train.size());
    LossSpec loss;
    loss.kind = LossKind::gce;
    loss.q = cfg.gce_q;
    for (std::size_t e = 0; e < cfg.e_lp; ++e) {
        head_epoch(head, feats, train.given_labels, idx, loss, *opt, slot_w, slot_b,
                   cfg.batch_size, rng);
    }
    return feats;
}

RunReport run_turn(Extractor& ext, LinearHead& head, const Dataset& train,
                   const Dataset& test, const Dataset* valid, const TurnConfig& cfg) {
    cfg.validate();
    RunReport rep;
    rep.method = "turn";
    rep.tuning = "lp+fft";
    rep.seed = cfg.seed;

    if (cfg.lp_enabled) {
        const Matrix train_feats = extract_features(ext, train);
        const Matrix test_feats = extract_features(ext, test);
        Matrix valid_feats;
        if (valid != nullptr) valid_feats = extract_features(ext, *valid);

        auto opt = make_optimizer(cfg.lp_optim);
        const std::size_t slot_w = opt->register_param(head.W.data.size());
        const std::size_t slot_b = opt->register_param(head.b.size());
        Rng rng(cfg.seed, kLpShuffleStream);
        const auto idx = all_indices(train.size());
        LossSpec loss;
        loss.kind = LossKind::gce;
        loss.q = cfg.gce_q;
        for (std::size_t e = 0; e < cfg.e_lp; ++e) {
            Timer timer;
            const EpochStats stats =
                head_epoch(head, train_feats, train.given_labels, idx, loss, *opt,
                           slot_w, slot_b, cfg.batch_size, rng);
            EpochRecord rec;
            rec.stage = "lp";
            rec.epoch = e + 1;
            rec.train_loss = stats.mean_loss;
            rec.test_acc = head_eval(head, test_feats, test.given_labels);
            if (valid != nullptr)
                rec.val_acc = head_eval(head, valid_feats, valid->given_labels);
            rec.wall_ms = timer.ms();
            rep.epochs.push_back(rec);
        }
    }

    if (cfg.reinit_head) {
        head.W.fill(0.0);
        std::fill(head.b.begin(), head.b.end(), 0.0);
    }

    auto opt = make_optimizer(cfg.fft_optim);
    BoundParams bound = bind_model_params(*opt, ext, head, TuningMode::FFT);
    Rng rng(cfg.seed, kFftShuffleStream);
    const auto full = all_indices(train.size());
    std::vector<std::uint32_t> subset;
    std::optional<double> subset_purity;
    LossSpec ce;

    for (std::size_t e = 0; e < cfg.e_fft; ++e) {
        Timer timer;
        double select_ms = 0.0;
        std::optional<std::size_t> selected;
        if (cfg.cleansing == CleansingMode::none) {
            subset = full;
        } else if (cfg.cleansing == CleansingMode::multiple || e == 0) {
            Timer select_timer;
            const LossVector losses =
                per_sample_losses(ext, head, train.inputs.data(), train.dim,
                                  train.given_labels, train.size());
            SelectionConfig sel_cfg = cfg.selection;
            sel_cfg.seed = cfg.seed + kSelectSeedOffset + e;
            const SelectionResult sel =
                select_clean(losses, train.given_labels, train.num_classes, sel_cfg);
            subset = sel.indices;
            if (train.has_true_labels()) {
                subset_purity = selection_purity(subset, train.given_labels,
                                                 train.true_labels);
                rep.final_purity = subset_purity;
            }
            select_ms = select_timer.ms();
        }
        if (cfg.cleansing != CleansingMode::none) selected = subset.size();

        const EpochStats stats =
            train_epoch(ext, head, train.inputs.data(), train.dim, train.given_labels,
                        subset, TuningMode::FFT, ce, *opt, bound, cfg.batch_size, rng);

        EpochRecord rec;
        rec.stage = "fft";
        rec.epoch = e + 1;
        rec.train_loss = stats.mean_loss;
        rec.test_acc = evaluate(ext, head, test);
        if (valid != nullptr) rec.val_acc = evaluate(ext, head, *valid);
        rec.selected = selected;
        rec.purity = subset_purity;
        rec.wall_ms = timer.ms();
        rec.select_ms = select_ms;
        rep.epochs.push_back(rec);
    }

    finalize(rep);
    return rep;
}

RunReport run_baseline(Extractor& ext, LinearHead& head, const Dataset& train,
                       const Dataset& test, const Dataset* valid,
                       const BaselineConfig& cfg) {
    cfg.validate();
    RunReport rep;
    rep.method = to_string(cfg.method);
    rep.tuning = cfg.tuning == TuningMode::LP ? "lp" : "fft";
    rep.seed = cfg.seed;

    const std::size_t epochs =
        cfg.epochs > 0 ? cfg.epochs : (cfg.tuning == TuningMode::LP ? 20 : 5);
    ElrState elr(train.size(), train.num_classes, cfg.elr_beta, cfg.elr_lambda);
    LossSpec loss;
    loss.kind = cfg.method;
    loss.q = cfg.gce_q;
    if (cfg.method == LossKind::elr) loss.elr = &elr;
    const auto idx = all_indices(train.size());

    if (cfg.tuning == TuningMode::LP) {
        const Matrix train_feats = extract_features(ext, train);
        const Matrix test_feats = extract_features(ext, test);
        Matrix valid_feats;
        if (valid != nullptr) valid_feats = extract_features(ext, *valid);
        auto opt = make_optimizer(cfg.lp_optim);
        const std::size_t slot_w = opt->register_param(head.W.data.size());
        const std::size_t slot_b = opt->register_param(head.b.size());
        Rng rng(cfg.seed, kLpShuffleStream);
        for (std::size_t e = 0; e < epochs; ++e) {
            Timer timer;
            const EpochStats stats =
                head_epoch(head, train_feats, train.given_labels, idx, loss, *opt,
                           slot_w, slot_b, cfg.batch_size, rng);
            EpochRecord rec;
            rec.stage = "lp";
            rec.epoch = e + 1;
            rec.train_loss = stats.mean_loss;
            rec.test_acc = head_eval(head, test_feats, test.given_labels);
            if (valid != nullptr)
                rec.val_acc = head_eval(head, valid_feats, valid->given_labels);
            rec.wall_ms = timer.ms();
            rep.epochs.push_back(rec);
        }
    } else {
        auto opt = make_optimizer(cfg.fft_optim);
        BoundParams bound = bind_model_params(*opt, ext, head, TuningMode::FFT);
        Rng rng(cfg.seed, kFftShuffleStream);
        for (std::size_t e = 0; e < epochs; ++e) {
            Timer timer;
            const EpochStats stats = train_epoch(
                ext, head, train.inputs.data(), train.dim, train.given_labels, idx,
                TuningMode::FFT, loss, *opt, bound, cfg.batch_size, rng);
            EpochRecord rec;
            rec.stage = "fft";
            rec.epoch = e + 1;
            rec.train_loss = stats.mean_loss;
            rec.test_acc = evaluate(ext, head, test);
            if (valid != nullptr) rec.val_acc = evaluate(ext, head, *valid);
            rec.wall_ms = timer.ms();
            rep.epochs.push_back(rec);
        }
    }

    finalize(rep);
    return rep;
}

} // namespace turnlnl
