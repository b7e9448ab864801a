#include "turnlnl/model.hpp"

#include <bit>
#include <cassert>
#include <cmath>
#include <cstring>
#include <fstream>

#include "turnlnl/errors.hpp"
#include "turnlnl/rng.hpp"

namespace turnlnl {

std::string to_string(ExtractorMode mode) {
    switch (mode) {
        case ExtractorMode::mlp: return "mlp";
        case ExtractorMode::residual_adapter: return "residual_adapter";
        case ExtractorMode::identity: return "identity";
    }
    return "mlp";
}

ExtractorMode extractor_mode_from_string(const std::string& s) {
    if (s == "mlp") return ExtractorMode::mlp;
    if (s == "residual_adapter") return ExtractorMode::residual_adapter;
    if (s == "identity") return ExtractorMode::identity;
    throw ConfigError("unknown extractor mode '" + s + "'");
}

namespace {

void fill_fan_in(Matrix& w, std::size_t fan_in, Rng& rng) {
    const double a = std::sqrt(3.0 / static_cast<double>(fan_in));
    for (auto& v : w.data) v = a * (2.0 * rng.uniform() - 1.0);
}

} // namespace

std::pair<Extractor, LinearHead> init_model(std::size_t L, std::size_t H, std::size_t F,
                                            std::size_t C, std::uint64_t seed,
                                            ExtractorMode mode) {
    if (L == 0 || F == 0 || C == 0 || (mode != ExtractorMode::identity && H == 0))
        throw ConfigError("init_model: dimensions must be positive");
    if ((mode == ExtractorMode::identity || mode == ExtractorMode::residual_adapter) && F != L)
        throw ConfigError("init_model: " + to_string(mode) + " requires feature_dim == input_dim");

    Extractor ext;
    ext.mode = mode;
    ext.in_dim = L;
    ext.out_dim = F;
    Rng rng(seed, /*stream=*/47);
    if (mode != ExtractorMode::identity) {
        ext.hidden = H;
        ext.W1 = Matrix(H, L);
        ext.b1.assign(H, 0.0);
        ext.W2 = Matrix(F, H);
        ext.b2.assign(F, 0.0);
        fill_fan_in(ext.W1, L, rng);
        if (mode == ExtractorMode::mlp)
            fill_fan_in(ext.W2, H, rng);
        // residual adapter keeps W2 at zero: identity map at step 0
    }
    LinearHead head;
    head.W = Matrix(C, F);
    head.b.assign(C, 0.0);
    return {std::move(ext), std::move(head)};
}

Matrix forward(const Extractor& ext, const LinearHead& head, const float* inputs,
               std::size_t batch, std::size_t width, TuningMode mode, ForwardCache& cache) {
    if (width != ext.in_dim)
        throw std::logic_error("forward: input width does not match extractor");
    const std::size_t L = ext.in_dim, H = ext.hidden, F = ext.out_dim;
    const std::size_t C = head.W.rows;
    assert(head.W.cols == F);

    cache.mode = mode;
    cache.batch = batch;
    cache.x = Matrix(batch, L);
    for (std::size_t i = 0; i < batch * L; ++i) cache.x.data[i] = static_cast<double>(inputs[i]);

    cache.z = Matrix(batch, F);
    if (ext.mode == ExtractorMode::identity) {
        cache.pre = Matrix();
        cache.z.data = cache.x.data;
    } else {
        cache.pre = Matrix(batch, H);
        for (std::size_t i = 0; i < batch; ++i) {
            const double* x = cache.x[i];
            double* a = cache.pre[i];
            for (std::size_t h = 0; h < H; ++h) {
                double s = ext.b1[h];
                const double* w = ext.W1[h];
                for (std::size_t j = 0; j < L; ++j) s += w[j] * x[j];
                a[h] = s;
            }
            double* z = cache.z[i];
            for (std::size_t f = 0; f < F; ++f) {
                double s = ext.b2[f];
                const double* w = ext.W2[f];
                for (std::size_t h = 0; h < H; ++h)
                    if (a[h] > 0.0) s += w[h] * a[h];
                z[f] = s;
            }
            if (ext.mode == ExtractorMode::residual_adapter)
                for (std::size_t f = 0; f < F; ++f) z[f] += x[f];
        }
    }

    Matrix logits(batch, C);
    for (std::size_t i = 0; i < batch; ++i) {
        const double* z = cache.z[i];
        double* out = logits[i];
        for (std::size_t c = 0; c < C; ++c) {
            double s = head.b[c];
            const double* w = head.W[c];
            for (std::size_t f = 0; f < F; ++f) s += w[f] * z[f];
            out[c] = s;
        }
    }
    return logits;
}

ModelGrads backward(const Extractor& ext, const LinearHead& head, const ForwardCache& cache,
                    const Matrix& dlogits, TuningMode mode) {
    if (dlogits.rows != cache.batch || dlogits.cols != head.W.rows)
        throw std::logic_error("backward: dlogits shape does not match cache");
    const std::size_t L = ext.in_dim, H = ext.hidden, F = ext.out_dim;
    const std::size_t C = head.W.rows;
    const std::size_t B = cache.batch;

    ModelGrads g;
    g.dW = Matrix(C, F);
    g.db.assign(C, 0.0);
    const bool train_theta = mode == TuningMode::FFT && ext.has_params();
    g.has_extractor = train_theta;
    if (train_theta) {
        g.dW1 = Matrix(H, L);
        g.db1.assign(H, 0.0);
        g.dW2 = Matrix(F, H);
        g.db2.assign(F, 0.0);
    }

    std::vector<double> dz(F), da(H);
    for (std::size_t i = 0; i < B; ++i) {
        const double* gl = dlogits[i];
        const double* z = cache.z[i];
        for (std::size_t c = 0; c < C; ++c) {
            g.db[c] += gl[c];
            double* dw = g.dW[c];
            for (std::size_t f = 0; f < F; ++f) dw[f] += gl[c] * z[f];
        }
        if (!train_theta) continue;

        for (std::size_t f = 0; f < F; ++f) {
            double s = 0.0;
            for (std::size_t c = 0; c < C; ++c) s += head.W[c][f] * gl[c];
            dz[f] = s;
        }
        const double* a = cache.pre[i];
        const double* x = cache.x[i];
        for (std::size_t f = 0; f < F; ++f) {
            g.db2[f] += dz[f];
            double* dw2 = g.dW2[f];
            for (std::size_t h = 0; h < H; ++h)
                if (a[h] > 0.0) dw2[h] += dz[f] * a[h];
        }
        for (std::size_t h = 0; h < H; ++h) {
            if (a[h] <= 0.0) {
                da[h] = 0.0;
                continue;
            }
            double s = 0.0;
            for (std::size_t f = 0; f < F; ++f) s += ext.W2[f][h] * dz[f];
            da[h] = s;
        }
        for (std::size_t h = 0; h < H; ++h) {
            if (da[h] == 0.0) continue;
            g.db1[h] += da[h];
            double* dw1 = g.dW1[h];
            for (std::size_t j = 0; j < L; ++j) dw1[j] += da[h] * x[j];
        }
    }
    return g;
}

namespace {

constexpr char kModelMagic[8] = {'T', 'U', 'R', 'N', 'M', 'D', '0', '1'};

void put_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::ifstream& in, const std::filesystem::path& p) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("truncated model file: " + p.string());
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

void put_f64(std::ofstream& out, double v) {
    put_u64(out, std::bit_cast<std::uint64_t>(v));
}

double get_f64(std::ifstream& in, const std::filesystem::path& p) {
    return std::bit_cast<double>(get_u64(in, p));
}

void put_all(std::ofstream& out, const std::vector<double>& v) {
    for (const double x : v) put_f64(out, x);
}

void get_all(std::ifstream& in, std::vector<double>& v, const std::filesystem::path& p) {
    for (auto& x : v) x = get_f64(in, p);
}

} // namespace

void save_model(const std::filesystem::path& path, const Extractor& ext, const LinearHead& head) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out.write(kModelMagic, 8);
    put_u64(out, ext.in_dim);
    put_u64(out, ext.hidden);
    put_u64(out, ext.out_dim);
    put_u64(out, head.W.rows);
    const unsigned char mode_byte = static_cast<unsigned char>(ext.mode);
    out.write(reinterpret_cast<const char*>(&mode_byte), 1);
    put_all(out, ext.W1.data);
    put_all(out, ext.b1);
    put_all(out, ext.W2.data);
    put_all(out, ext.b2);
    put_all(out, head.W.data);
    put_all(out, head.b);
    if (!out) throw DataError("write failed: " + path.string());
}

std::pair<Extractor, LinearHead> load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kModelMagic, 8) != 0)
        throw DataError("unrecognized format: " + path.string());
    Extractor ext;
    ext.in_dim = get_u64(in, path);
    ext.hidden = get_u64(in, path);
    ext.out_dim = get_u64(in, path);
    const std::uint64_t C = get_u64(in, path);
    unsigned char mode_byte = 0;
    if (!in.read(reinterpret_cast<char*>(&mode_byte), 1))
        throw DataError("truncated model file: " + path.string());
    if (mode_byte > 2) throw DataError("bad extractor mode in " + path.string());
    ext.mode = static_cast<ExtractorMode>(mode_byte);
    if (ext.mode != ExtractorMode::identity) {
        ext.W1 = Matrix(ext.hidden, ext.in_dim);
        ext.b1.assign(ext.hidden, 0.0);
        ext.W2 = Matrix(ext.out_dim, ext.hidden);
        ext.b2.assign(ext.out_dim, 0.0);
    }
    LinearHead head;
    head.W = Matrix(C, ext.out_dim);
    head.b.assign(C, 0.0);
    get_all(in, ext.W1.data, path);
    get_all(in, ext.b1, path);
    get_all(in, ext.W2.data, path);
    get_all(in, ext.b2, path);
    get_all(in, head.W.data, path);
    get_all(in, head.b, path);
    for (const auto* vec : {&ext.W1.data, &ext.b1, &ext.W2.data, &ext.b2, &head.W.data, &head.b})
        for (const double v : *vec)
            if (!std::isfinite(v)) throw NumericError("non-finite parameter in " + path.string());
    return {std::move(ext), std::move(head)};
}

} // namespace turnlnl
