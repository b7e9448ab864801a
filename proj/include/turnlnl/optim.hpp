#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace turnlnl {

enum class OptimKind { sgd, adamw };

std::string to_string(OptimKind kind);
OptimKind optim_kind_from_string(const std::string& s);

struct SgdConfig {
    double lr = 1e-2;
    double momentum = 0.0;
    double weight_decay = 0.0; // coupled: added to the gradient
};

struct AdamWConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0; // decoupled
};

/// Update rule over an ordered set of parameter tensors. Slots are registered
/// once (fixed order = deterministic updates) and advanced together: call
/// begin_step() once per optimizer step, then update() for every slot.
class Optimizer {
public:
    virtual ~Optimizer() = default;

    std::size_t register_param(std::size_t n) {
        sizes_.push_back(n);
        on_register(n);
        return sizes_.size() - 1;
    }

    virtual void begin_step() {}
    virtual void update(std::size_t slot, std::span<double> params,
                        std::span<const double> grads) = 0;

protected:
    virtual void on_register(std::size_t n) = 0;
    std::vector<std::size_t> sizes_;
};

class SgdOptimizer final : public Optimizer {
public:
    explicit SgdOptimizer(const SgdConfig& cfg);
    void update(std::size_t slot, std::span<double> params,
                std::span<const double> grads) override;

private:
    void on_register(std::size_t n) override;
    SgdConfig cfg_;
    std::vector<std::vector<double>> velocity_;
};

class AdamWOptimizer final : public Optimizer {
public:
    explicit AdamWOptimizer(const AdamWConfig& cfg);
    void begin_step() override { ++step_; }
    void update(std::size_t slot, std::span<double> params,
                std::span<const double> grads) override;

private:
    void on_register(std::size_t n) override;
    AdamWConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::uint64_t step_ = 0;
};

struct OptimSpec {
    OptimKind kind = OptimKind::sgd;
    double lr = 1e-2;
    double momentum = 0.0;
    double weight_decay = 0.0;
};

std::unique_ptr<Optimizer> make_optimizer(const OptimSpec& spec);

} // namespace turnlnl
