#include "turnlnl/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "turnlnl/errors.hpp"

namespace turnlnl {

std::string to_string(OptimKind kind) {
    return kind == OptimKind::sgd ? "sgd" : "adamw";
}

OptimKind optim_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimKind::sgd;
    if (s == "adamw") return OptimKind::adamw;
    throw ConfigError("unknown optimizer kind: " + s);
}

namespace {

void check_finite(std::span<const double> grads) {
    for (double g : grads) {
        if (!std::isfinite(g)) throw NumericError("non-finite gradient");
    }
}

void check_slot(std::size_t slot, std::size_t count, std::span<const double> params,
                std::span<const double> grads, std::size_t expected) {
    if (slot >= count) throw std::logic_error("optimizer slot out of range");
    if (params.size() != expected || grads.size() != expected)
        throw std::logic_error("optimizer slot size mismatch");
}

} // namespace

SgdOptimizer::SgdOptimizer(const SgdConfig& cfg) : cfg_(cfg) {
    if (!(cfg_.lr > 0.0)) throw ConfigError("sgd lr must be positive");
    if (cfg_.momentum < 0.0 || cfg_.momentum >= 1.0)
        throw ConfigError("sgd momentum must be in [0, 1)");
    if (cfg_.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

void SgdOptimizer::on_register(std::size_t n) {
    velocity_.emplace_back(n, 0.0);
}

void SgdOptimizer::update(std::size_t slot, std::span<double> params,
                          std::span<const double> grads) {
    check_slot(slot, velocity_.size(), params, grads, sizes_[slot]);
    check_finite(grads);
    auto& vel = velocity_[slot];
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i] + cfg_.weight_decay * params[i];
        vel[i] = cfg_.momentum * vel[i] + g;
        params[i] -= cfg_.lr * vel[i];
    }
}

AdamWOptimizer::AdamWOptimizer(const AdamWConfig& cfg) : cfg_(cfg) {
    if (!(cfg_.lr > 0.0)) throw ConfigError("adamw lr must be positive");
    if (cfg_.beta1 < 0.0 || cfg_.beta1 >= 1.0 || cfg_.beta2 < 0.0 || cfg_.beta2 >= 1.0)
        throw ConfigError("adamw betas must be in [0, 1)");
    if (!(cfg_.eps > 0.0)) throw ConfigError("adamw eps must be positive");
    if (cfg_.weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
}

void AdamWOptimizer::on_register(std::size_t n) {
    m_.emplace_back(n, 0.0);
    v_.emplace_back(n, 0.0);
}

void AdamWOptimizer::update(std::size_t slot, std::span<double> params,
                            std::span<const double> grads) {
    check_slot(slot, m_.size(), params, grads, sizes_[slot]);
    check_finite(grads);
    if (step_ == 0) throw std::logic_error("AdamW update before begin_step");
    auto& m = m_[slot];
    auto& v = v_[slot];
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        params[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                                cfg_.weight_decay * params[i]);
    }
}

std::unique_ptr<Optimizer> make_optimizer(const OptimSpec& spec) {
    if (spec.kind == OptimKind::sgd) {
        SgdConfig cfg;
        cfg.lr = spec.lr;
        cfg.momentum = spec.momentum;
        cfg.weight_decay = spec.weight_decay;
        return std::make_unique<SgdOptimizer>(cfg);
    }
    AdamWConfig cfg;
    cfg.lr = spec.lr;
    cfg.weight_decay = spec.weight_decay;
    return std::make_unique<AdamWOptimizer>(cfg);
}

} // namespace turnlnl
