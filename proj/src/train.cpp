#include "turnlnl/train.hpp"

#include <algorithm>
#include <stdexcept>

#include "turnlnl/errors.hpp"

namespace turnlnl {

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::ce: return "ce";
        case LossKind::gce: return "gce";
        case LossKind::elr: return "elr";
    }
    throw std::logic_error("bad LossKind");
}

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "ce") return LossKind::ce;
    if (s == "gce") return LossKind::gce;
    if (s == "elr") return LossKind::elr;
    throw ConfigError("unknown loss kind: " + s);
}

BoundParams bind_model_params(Optimizer& opt, Extractor& ext, LinearHead& head,
                              TuningMode mode) {
    BoundParams bound;
    bound.mode = mode;
    if (mode == TuningMode::FFT && ext.has_params()) {
        bound.extractor_bound = true;
        bound.entries.push_back({opt.register_param(ext.W1.data.size()), &ext.W1.data});
        bound.entries.push_back({opt.register_param(ext.b1.size()), &ext.b1});
        bound.entries.push_back({opt.register_param(ext.W2.data.size()), &ext.W2.data});
        bound.entries.push_back({opt.register_param(ext.b2.size()), &ext.b2});
    }
    bound.entries.push_back({opt.register_param(head.W.data.size()), &head.W.data});
    bound.entries.push_back({opt.register_param(head.b.size()), &head.b});
    return bound;
}

namespace {

std::size_t argmax_row(const Matrix& logits, std::size_t row) {
    std::size_t best = 0;
    double best_v = logits.at(row, 0);
    for (std::size_t c = 1; c < logits.cols; ++c) {
        const double v = logits.at(row, c);
        if (v > best_v) {
            best_v = v;
            best = c;
        }
    }
    return best;
}

void apply_grads(Optimizer& opt, const BoundParams& bound, const ModelGrads& grads) {
    std::vector<std::span<const double>> tensors;
    if (bound.extractor_bound) {
        if (!grads.has_extractor)
            throw std::logic_error("extractor bound but no extractor gradients");
        tensors.push_back(grads.dW1.data);
        tensors.push_back(grads.db1);
        tensors.push_back(grads.dW2.data);
        tensors.push_back(grads.db2);
    }
    tensors.push_back(grads.dW.data);
    tensors.push_back(grads.db);
    if (tensors.size() != bound.entries.size())
        throw std::logic_error("gradient/slot count mismatch");
    opt.begin_step();
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        auto& entry = bound.entries[i];
        opt.update(entry.slot, std::span<double>(*entry.values), tensors[i]);
    }
}

} // namespace

EpochStats train_epoch(Extractor& ext, LinearHead& head, const float* inputs,
                       std::size_t width, std::span<const std::uint32_t> labels,
                       std::span<const std::uint32_t> indices, TuningMode mode,
                       const LossSpec& loss, Optimizer& opt,
                       const BoundParams& bound, std::size_t batch_size,
                       Rng& rng) {
    if (indices.empty()) throw std::logic_error("train_epoch on empty index set");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (loss.kind == LossKind::elr && loss.elr == nullptr)
        throw std::logic_error("elr loss requires an ElrState");
    if (bound.mode != mode) throw std::logic_error("bound params tuning mode mismatch");

    std::vector<std::uint32_t> order(indices.begin(), indices.end());
    rng.shuffle(order);

    const std::size_t n = order.size();
    const std::size_t num_classes = head.W.rows;
    std::vector<float> batch_x;
    std::vector<double> probs(num_classes);
    ForwardCache cache;
    double loss_sum = 0.0;
    std::size_t correct = 0;

    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t b = std::min(batch_size, n - start);
        batch_x.resize(b * width);
        for (std::size_t r = 0; r < b; ++r) {
            const float* src = inputs + static_cast<std::size_t>(order[start + r]) * width;
            std::copy(src, src + width, batch_x.begin() + r * width);
        }
        const Matrix logits = forward(ext, head, batch_x.data(), b, width, mode, cache);
        Matrix dlogits(b, num_classes);
        for (std::size_t r = 0; r < b; ++r) {
            const std::uint32_t idx = order[start + r];
            const std::uint32_t label = labels[idx];
            const std::span<const double> row(logits.data.data() + r * num_classes,
                                              num_classes);
            const std::span<double> drow(dlogits.data.data() + r * num_classes,
                                         num_classes);
            double l = 0.0;
            switch (loss.kind) {
                case LossKind::ce:
                    l = ce_loss_grad(row, label, drow);
                    break;
                case LossKind::gce:
                    l = gce_loss_grad(row, label, loss.q, drow);
                    break;
                case LossKind::elr: {
                    const std::span<const double> target(
                        loss.elr->targets.data.data() + idx * num_classes, num_classes);
                    l = elr_loss_grad(row, label, target, loss.elr->lambda, drow);
                    break;
                }
            }
            loss_sum += l;
            if (argmax_row(logits, r) == label) ++correct;
        }
        if (loss.kind == LossKind::elr) {
            for (std::size_t r = 0; r < b; ++r) {
                const std::span<const double> row(logits.data.data() + r * num_classes,
                                                  num_classes);
                softmax_probs(row, probs);
                loss.elr->update_targets(probs, order[start + r]);
            }
        }
        const double scale = 1.0 / static_cast<double>(b);
        for (double& d : dlogits.data) d *= scale;
        const ModelGrads grads = backward(ext, head, cache, dlogits, mode);
        apply_grads(opt, bound, grads);
    }

    EpochStats stats;
    stats.mean_loss = loss_sum / static_cast<double>(n);
    stats.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return stats;
}

double evaluate_accuracy(const Extractor& ext, const LinearHead& head,
                         const float* inputs, std::size_t width,
                         std::span<const std::uint32_t> labels, std::size_t rows) {
    if (rows == 0) throw std::logic_error("evaluate_accuracy on empty set");
    ForwardCache cache;
    const std::size_t chunk = 256;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < rows; start += chunk) {
        const std::size_t b = std::min(chunk, rows - start);
        const Matrix logits = forward(ext, head, inputs + start * width, b, width,
                                      TuningMode::LP, cache);
        for (std::size_t r = 0; r < b; ++r) {
            if (argmax_row(logits, r) == labels[start + r]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(rows);
}

} // namespace turnlnl
