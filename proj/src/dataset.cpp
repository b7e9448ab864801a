#include "turnlnl/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "turnlnl/errors.hpp"
#include "turnlnl/rng.hpp"

namespace turnlnl {

namespace fs = std::filesystem;

std::string to_string(DatasetKind kind) {
    return kind == DatasetKind::raw ? "raw" : "feature";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
    if (s == "raw") return DatasetKind::raw;
    if (s == "feature") return DatasetKind::feature;
    throw DataError("unknown dataset kind '" + s + "'");
}

void Dataset::validate() const {
    const std::size_t n = given_labels.size();
    if (inputs.size() != n * dim)
        throw DataError("dataset: inputs size does not match N x dim");
    if (!true_labels.empty() && true_labels.size() != n)
        throw DataError("dataset: true_labels length differs from given_labels");
    for (std::size_t i = 0; i < n; ++i) {
        if (given_labels[i] >= num_classes)
            throw DataError("dataset: given label out of range at row " + std::to_string(i));
        if (!true_labels.empty() && true_labels[i] != kUnknownLabel &&
            true_labels[i] >= num_classes)
            throw DataError("dataset: true label out of range at row " + std::to_string(i));
    }
    for (const float v : inputs) {
        if (!std::isfinite(v)) throw NumericError("dataset: non-finite input value");
    }
}

void SyntheticSpec::validate() const {
    if (num_classes == 0) throw ConfigError("synthetic: num_classes must be positive");
    if (input_dim == 0) throw ConfigError("synthetic: input_dim must be positive");
    if (per_class_train == 0 || per_class_test == 0 || per_class_pretrain == 0)
        throw ConfigError("synthetic: per-class counts must be positive");
    if (separation < 0.0) throw ConfigError("synthetic: separation must be nonnegative");
}

namespace {

Dataset make_split(const std::vector<double>& means, const SyntheticSpec& spec,
                   std::size_t per_class, Rng& rng) {
    Dataset d;
    d.kind = DatasetKind::raw;
    d.num_classes = spec.num_classes;
    d.dim = spec.input_dim;
    const std::size_t n = per_class * spec.num_classes;
    d.inputs.resize(n * spec.input_dim);
    d.given_labels.resize(n);
    d.true_labels.resize(n);
    std::size_t row = 0;
    for (std::uint32_t c = 0; c < spec.num_classes; ++c) {
        const double* mu = means.data() + static_cast<std::size_t>(c) * spec.input_dim;
        for (std::size_t k = 0; k < per_class; ++k, ++row) {
            float* out = d.row(row);
            for (std::size_t j = 0; j < spec.input_dim; ++j)
                out[j] = static_cast<float>(mu[j] + rng.normal());
            d.given_labels[row] = c;
            d.true_labels[row] = c;
        }
    }
    return d;
}

} // namespace

SyntheticBundle generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    Rng rng(spec.seed, /*stream=*/17);
    std::vector<double> means(static_cast<std::size_t>(spec.num_classes) * spec.input_dim);
    for (double& m : means) m = spec.separation * rng.normal();
    SyntheticBundle b;
    b.train = make_split(means, spec, spec.per_class_train, rng);
    b.test = make_split(means, spec, spec.per_class_test, rng);
    b.pretrain = make_split(means, spec, spec.per_class_pretrain, rng);
    return b;
}

SplitResult split(const Dataset& dataset, const SplitSpec& spec) {
    if (spec.valid_fraction < 0.0 || spec.valid_fraction >= 1.0)
        throw ConfigError("split: valid_fraction must be in [0, 1)");
    std::vector<std::vector<std::size_t>> by_class(dataset.num_classes);
    for (std::size_t i = 0; i < dataset.size(); ++i)
        by_class[dataset.given_labels[i]].push_back(i);

    Rng rng(spec.seed, /*stream=*/23);
    std::vector<std::size_t> train_idx, valid_idx;
    for (auto& rows : by_class) {
        rng.shuffle(rows);
        const auto n_valid =
            static_cast<std::size_t>(spec.valid_fraction * static_cast<double>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k)
            (k < n_valid ? valid_idx : train_idx).push_back(rows[k]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(valid_idx.begin(), valid_idx.end());

    auto take = [&](const std::vector<std::size_t>& idx) {
        Dataset out;
        out.kind = dataset.kind;
        out.num_classes = dataset.num_classes;
        out.dim = dataset.dim;
        out.inputs.resize(idx.size() * dataset.dim);
        out.given_labels.resize(idx.size());
        if (dataset.has_true_labels()) out.true_labels.resize(idx.size());
        for (std::size_t k = 0; k < idx.size(); ++k) {
            std::memcpy(out.row(k), dataset.row(idx[k]), dataset.dim * sizeof(float));
            out.given_labels[k] = dataset.given_labels[idx[k]];
            if (dataset.has_true_labels()) out.true_labels[k] = dataset.true_labels[idx[k]];
        }
        return out;
    };
    return SplitResult{take(train_idx), take(valid_idx)};
}

namespace {

constexpr char kFeatureMagic[8] = {'T', 'U', 'R', 'N', 'F', 'V', '0', '1'};
constexpr char kLabelMagic[8] = {'T', 'U', 'R', 'N', 'L', 'B', '0', '1'};

void put_u64(std::ofstream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 8);
}

void put_u32(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ofstream& out, float v) {
    static_assert(sizeof(float) == 4);
    std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint64_t get_u64(std::ifstream& in, const fs::path& p) {
    unsigned char b[8];
    if (!in.read(reinterpret_cast<char*>(b), 8))
        throw DataError("truncated file: " + p.string());
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

std::uint32_t get_u32(std::ifstream& in, const fs::path& p) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4))
        throw DataError("truncated file: " + p.string());
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

float get_f32(std::ifstream& in, const fs::path& p) {
    return std::bit_cast<float>(get_u32(in, p));
}

void check_magic(std::ifstream& in, const char (&magic)[8], const fs::path& p) {
    char got[8];
    if (!in.read(got, 8) || std::memcmp(got, magic, 8) != 0)
        throw DataError("unrecognized format: " + p.string());
}

std::vector<std::uint32_t> read_labels(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open " + p.string());
    check_magic(in, kLabelMagic, p);
    const std::uint64_t n = get_u64(in, p);
    std::vector<std::uint32_t> labels(n);
    for (auto& l : labels) l = get_u32(in, p);
    return labels;
}

void write_labels(const fs::path& p, const std::vector<std::uint32_t>& labels) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + p.string());
    out.write(kLabelMagic, 8);
    put_u64(out, labels.size());
    for (const auto l : labels) put_u32(out, l);
    if (!out) throw DataError("write failed: " + p.string());
}

} // namespace

void write_dataset(const Dataset& dataset, const fs::path& dir) {
    dataset.validate();
    std::error_code ec;
    fs::create_directories(dir, ec);
    const fs::path fv = dir / "features.tfv";
    {
        std::ofstream out(fv, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + fv.string());
        out.write(kFeatureMagic, 8);
        put_u64(out, dataset.size());
        put_u64(out, dataset.dim);
        put_u64(out, dataset.num_classes);
        for (const float v : dataset.inputs) put_f32(out, v);
        if (!out) throw DataError("write failed: " + fv.string());
    }
    write_labels(dir / "given_labels.tlb", dataset.given_labels);
    if (dataset.has_true_labels()) {
        write_labels(dir / "true_labels.tlb", dataset.true_labels);
    } else {
        // a reused directory must not keep a stale truth file
        fs::remove(dir / "true_labels.tlb", ec);
    }
    {
        const fs::path mp = dir / "meta.txt";
        std::ofstream out(mp, std::ios::trunc);
        if (!out) throw DataError("cannot write " + mp.string());
        out << "kind = " << to_string(dataset.kind) << "\n";
        out << "classes = " << dataset.num_classes << "\n";
        if (!out) throw DataError("write failed: " + mp.string());
    }
}

Dataset read_dataset(const fs::path& dir) {
    const fs::path mp = dir / "meta.txt";
    std::ifstream meta(mp);
    if (!meta) throw DataError("cannot open " + mp.string());
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(meta, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            const auto b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    if (!kv.count("kind") || !kv.count("classes"))
        throw DataError("meta.txt missing required keys in " + dir.string());

    Dataset d;
    d.kind = dataset_kind_from_string(kv["kind"]);
    d.num_classes = static_cast<std::uint32_t>(std::stoul(kv["classes"]));

    const fs::path fv = dir / "features.tfv";
    std::ifstream in(fv, std::ios::binary);
    if (!in) throw DataError("cannot open " + fv.string());
    check_magic(in, kFeatureMagic, fv);
    const std::uint64_t n = get_u64(in, fv);
    d.dim = get_u64(in, fv);
    const std::uint64_t c_stored = get_u64(in, fv);
    if (c_stored != 0 && c_stored != d.num_classes)
        throw DataError("class count mismatch between features.tfv and meta.txt");
    d.inputs.resize(n * d.dim);
    for (auto& v : d.inputs) v = get_f32(in, fv);

    d.given_labels = read_labels(dir / "given_labels.tlb");
    if (d.given_labels.size() != n)
        throw DataError("given_labels.tlb row count differs from features.tfv");
    if (fs::exists(dir / "true_labels.tlb")) {
        d.true_labels = read_labels(dir / "true_labels.tlb");
        if (d.true_labels.size() != n)
            throw DataError("true_labels.tlb row count differs from features.tfv");
    }
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.given_labels[i] >= d.num_classes)
            throw DataError("given label out of range at row " + std::to_string(i));
        if (!d.true_labels.empty() && d.true_labels[i] != kUnknownLabel &&
            d.true_labels[i] >= d.num_classes)
            throw DataError("true label out of range at row " + std::to_string(i));
    }
    for (const float v : d.inputs)
        if (!std::isfinite(v)) throw NumericError("non-finite feature in " + fv.string());
    return d;
}

} // namespace turnlnl
