#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "turnlnl/matrix.hpp"

namespace turnlnl {

enum class ExtractorMode { mlp, residual_adapter, identity };
enum class TuningMode { LP, FFT };

std::string to_string(ExtractorMode mode);
ExtractorMode extractor_mode_from_string(const std::string& s);

/// Stand-in pre-trained extractor f(.; theta): a one-hidden-layer rectifier
/// MLP, optionally residual (f(z) = z + MLP(z), zero-init output layer so it
/// starts as an exact identity), or a parameterless identity.
struct Extractor {
    ExtractorMode mode = ExtractorMode::mlp;
    std::size_t in_dim = 0;  // L
    std::size_t hidden = 0;  // H
    std::size_t out_dim = 0; // F
    Matrix W1;               // H x L
    std::vector<double> b1;  // H
    Matrix W2;               // F x H
    std::vector<double> b2;  // F

    bool has_params() const { return mode != ExtractorMode::identity; }
};

/// Linear classifier g(.; phi).
struct LinearHead {
    Matrix W;               // C x F
    std::vector<double> b;  // C
};

struct ForwardCache {
    TuningMode mode = TuningMode::LP;
    std::size_t batch = 0;
    Matrix x;   // B x L inputs
    Matrix pre; // B x H pre-activations (empty for identity)
    Matrix z;   // B x F features
};

struct ModelGrads {
    bool has_extractor = false;
    Matrix dW1;
    std::vector<double> db1;
    Matrix dW2;
    std::vector<double> db2;
    Matrix dW;
    std::vector<double> db;
};

/// Uniform fan-in init (U(+-sqrt(3/fan_in))) for weights, zero biases, and a
/// zero head so the starting loss is exactly ln C. A residual adapter gets a
/// zero-init W2 and acts as the identity at step 0.
std::pair<Extractor, LinearHead> init_model(std::size_t L, std::size_t H, std::size_t F,
                                            std::size_t C, std::uint64_t seed,
                                            ExtractorMode mode = ExtractorMode::mlp);

/// logits[i] = head.W * f(inputs row i) + head.b. `inputs` is row-major
/// batch x width where width must equal the extractor input dim.
Matrix forward(const Extractor& ext, const LinearHead& head, const float* inputs,
               std::size_t batch, std::size_t width, TuningMode mode, ForwardCache& cache);

/// Gradients for the scalar loss whose per-logit derivative is `dlogits`
/// (B x C). Scale dlogits by 1/B beforehand for batch-mean semantics.
/// Extractor gradients are produced only in FFT mode.
ModelGrads backward(const Extractor& ext, const LinearHead& head, const ForwardCache& cache,
                    const Matrix& dlogits, TuningMode mode);

/// Single-file checkpoint, magic "TURNMD01".
void save_model(const std::filesystem::path& path, const Extractor& ext, const LinearHead& head);
std::pair<Extractor, LinearHead> load_model(const std::filesystem::path& path);

} // namespace turnlnl
