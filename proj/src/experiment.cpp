#include "turnlnl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "turnlnl/errors.hpp"

namespace fs = std::filesystem;

namespace turnlnl {

namespace {

std::vector<std::vector<std::uint32_t>> parse_groups(const std::string& value) {
    if (value == "cifar100-super") return cifar100_superclass_groups();
    std::vector<std::vector<std::uint32_t>> groups;
    std::istringstream in(value);
    std::string part;
    while (std::getline(in, part, ';')) {
        std::istringstream gin(part);
        std::vector<std::uint32_t> group;
        std::uint64_t id = 0;
        while (gin >> id) group.push_back(static_cast<std::uint32_t>(id));
        if (!gin.eof())
            throw ConfigError("noise.groups: cannot parse group '" + part + "'");
        if (group.empty())
            throw ConfigError("noise.groups: empty group in '" + value + "'");
        groups.push_back(std::move(group));
    }
    if (groups.empty()) throw ConfigError("noise.groups: no groups in '" + value + "'");
    return groups;
}

std::string format_double(double v, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", precision, v);
    return buf;
}

struct RunFailure {
    std::string run_id;
    std::string kind; // config | data | numeric | other
    std::string message;
};

std::size_t worker_count(bool deterministic, std::size_t n_runs) {
    if (deterministic || n_runs <= 1) return 1;
    std::size_t threads = 0;
    if (const char* env = std::getenv("TURNLNL_THREADS")) {
        threads = parse_u64(env, "TURNLNL_THREADS");
    }
    if (threads == 0) {
        const unsigned hw = std::thread::hardware_concurrency();
        threads = hw == 0 ? 1 : hw;
    }
    return std::min(threads, n_runs);
}

} // namespace

RunSettings resolve_settings(const Config& cfg) {
    RunSettings s;

    s.source = cfg.get("data", "source", "synthetic");
    if (s.source != "synthetic" && s.source != "files")
        throw ConfigError("data.source must be synthetic or files");
    if (s.source == "files") s.data_path = cfg.require("data", "path");

    s.synth.num_classes = static_cast<std::uint32_t>(cfg.get_u64("data", "classes", 20));
    s.synth.input_dim = cfg.get_u64("data", "dim", 64);
    s.synth.per_class_train = cfg.get_u64("data", "train_per_class", 500);
    s.synth.per_class_test = cfg.get_u64("data", "test_per_class", 100);
    s.synth.per_class_pretrain = cfg.get_u64("data", "pretrain_per_class", 500);
    s.synth.separation = cfg.get_double("data", "separation", 3.0);
    s.feature_dim = cfg.get_u64("data", "feature_dim", 32);
    if (s.feature_dim == 0) throw ConfigError("data.feature_dim must be positive");
    s.valid_fraction = cfg.get_double("data", "valid_fraction", 0.0);
    if (s.valid_fraction < 0.0 || s.valid_fraction >= 1.0)
        throw ConfigError("data.valid_fraction must be in [0, 1)");

    s.noise.kind = noise_kind_from_string(cfg.get("noise", "kind", "none"));
    s.noise.ratio = cfg.get_double("noise", "ratio", 0.0);
    if (s.noise.ratio < 0.0 || s.noise.ratio > 1.0)
        throw ConfigError("noise.ratio must be in [0, 1]");
    s.noise.std_dev = cfg.get_double("noise", "std", 0.1);
    if (s.noise.std_dev < 0.0) throw ConfigError("noise.std must be >= 0");
    s.noise.allow_identity_flip = cfg.get_bool("noise", "allow_identity_flip", false);
    if (cfg.has("noise", "groups"))
        s.noise.groups = parse_groups(cfg.require("noise", "groups"));
    if (s.noise.kind == NoiseKind::asymmetric && s.noise.groups.empty())
        throw ConfigError("noise.groups is required for asymmetric noise");

    s.hidden = cfg.get_u64("model", "hidden", 128);
    if (s.hidden == 0) throw ConfigError("model.hidden must be positive");
    s.adapter = cfg.get_bool("model", "adapter", false);
    s.reinit_head = cfg.get_bool("model", "reinit_head", false);

    s.method = cfg.get("method", "name", "turn");
    if (s.method != "ce" && s.method != "gce" && s.method != "elr" &&
        s.method != "turn")
        throw ConfigError("method.name must be one of ce, gce, elr, turn");
    const std::string tuning = cfg.get("method", "tuning", "lp");
    if (tuning == "lp")
        s.tuning = TuningMode::LP;
    else if (tuning == "fft")
        s.tuning = TuningMode::FFT;
    else
        throw ConfigError("method.tuning must be lp or fft");
    s.gce_q = cfg.get_double("method", "q", 0.7);
    if (!(s.gce_q > 0.0) || s.gce_q > 1.0)
        throw ConfigError("method.q must be in (0, 1]");
    s.elr_beta = cfg.get_double("method", "elr_beta", 0.7);
    if (s.elr_beta < 0.0 || s.elr_beta >= 1.0)
        throw ConfigError("method.elr_beta must be in [0, 1)");
    s.elr_lambda = cfg.get_double("method", "elr_lambda", 3.0);
    if (s.elr_lambda < 0.0) throw ConfigError("method.elr_lambda must be >= 0");

    s.e_lp = cfg.get_u64("turn", "e_lp", 20);
    s.e_fft = cfg.get_u64("turn", "e_fft", 4);
    s.tau = cfg.get_double("turn", "tau", 0.6);
    if (s.tau < 0.0 || s.tau >= 1.0) throw ConfigError("turn.tau must be in [0, 1)");
    s.cleansing = cleansing_mode_from_string(cfg.get("turn", "cleansing", "multiple"));
    s.lp_enabled = cfg.get_bool("turn", "lp_enabled", true);
    s.min_class_fit = cfg.get_u64("turn", "min_class_fit", 20);
    if (s.min_class_fit == 0) throw ConfigError("turn.min_class_fit must be positive");
    s.per_class = cfg.get_bool("turn", "per_class", true);

    s.lp_optim.kind = optim_kind_from_string(cfg.get("optim", "lp_kind", "sgd"));
    s.lp_optim.lr = cfg.get_double("optim", "lp_lr", 3e-3);
    s.fft_optim.kind = optim_kind_from_string(cfg.get("optim", "fft_kind", "adamw"));
    s.fft_optim.lr = cfg.get_double("optim", "fft_lr", 3e-3);
    if (!(s.lp_optim.lr > 0.0)) throw ConfigError("optim.lp_lr must be positive");
    if (!(s.fft_optim.lr > 0.0)) throw ConfigError("optim.fft_lr must be positive");
    const double momentum = cfg.get_double("optim", "momentum", 0.0);
    if (momentum < 0.0 || momentum >= 1.0)
        throw ConfigError("optim.momentum must be in [0, 1)");
    const double wd = cfg.get_double("optim", "weight_decay", 0.0);
    if (wd < 0.0) throw ConfigError("optim.weight_decay must be >= 0");
    s.lp_optim.momentum = momentum;
    s.fft_optim.momentum = momentum;
    s.lp_optim.weight_decay = wd;
    s.fft_optim.weight_decay = wd;
    s.batch = cfg.get_u64("optim", "batch", 128);
    if (s.batch == 0) throw ConfigError("optim.batch must be positive");

    s.seed = cfg.get_u64("run", "seed", 1);
    s.epochs = cfg.get_u64("run", "epochs", 0);
    s.deterministic = cfg.get_bool("run", "deterministic", false);
    s.synth.seed = s.seed;
    s.noise.seed = s.seed;
    return s;
}

std::vector<RunSettings> expand_runs(const Config& cfg) {
    const auto ratios = cfg.sweep_values("noise", "ratio", "0");
    const auto taus = cfg.sweep_values("turn", "tau", "0.6");
    const auto e_lps = cfg.sweep_values("turn", "e_lp", "20");
    const auto e_ffts = cfg.sweep_values("turn", "e_fft", "4");
    const auto lp_lrs = cfg.sweep_values("optim", "lp_lr", "0.003");
    const auto fft_lrs = cfg.sweep_values("optim", "fft_lr", "0.003");
    const auto seeds = cfg.sweep_values("run", "seed", "1");

    std::vector<RunSettings> runs;
    std::size_t idx = 0;
    for (const auto& ratio : ratios)
        for (const auto& tau : taus)
            for (const auto& e_lp : e_lps)
                for (const auto& e_fft : e_ffts)
                    for (const auto& lp_lr : lp_lrs)
                        for (const auto& fft_lr : fft_lrs)
                            for (const auto& seed : seeds) {
                                Config point = cfg;
                                point.set("noise", "ratio", ratio);
                                point.set("turn", "tau", tau);
                                point.set("turn", "e_lp", e_lp);
                                point.set("turn", "e_fft", e_fft);
                                point.set("optim", "lp_lr", lp_lr);
                                point.set("optim", "fft_lr", fft_lr);
                                point.set("run", "seed", seed);
                                RunSettings s = resolve_settings(point);
                                char id[16];
                                std::snprintf(id, sizeof(id), "r%03zu", idx++);
                                s.run_id = id;
                                runs.push_back(std::move(s));
                            }
    return runs;
}

namespace {

struct RunData {
    Dataset train;
    Dataset test;
    Dataset valid; // empty when valid_fraction = 0
    Dataset pretrain;
    bool has_valid = false;
    bool has_pretrain = false;
};

RunData load_run_data(const RunSettings& s) {
    RunData d;
    if (s.source == "synthetic") {
        SyntheticSpec spec = s.synth;
        spec.seed = s.seed;
        SyntheticBundle bundle = generate_synthetic(spec);
        d.train = std::move(bundle.train);
        d.test = std::move(bundle.test);
        d.pretrain = std::move(bundle.pretrain);
        d.has_pretrain = d.pretrain.size() > 0;
    } else {
        d.train = read_dataset(s.data_path / "train");
        d.test = read_dataset(s.data_path / "test");
        if (fs::exists(s.data_path / "pretrain")) {
            d.pretrain = read_dataset(s.data_path / "pretrain");
            d.has_pretrain = true;
        }
    }

    if (s.noise.kind != NoiseKind::none) {
        NoiseSpec spec = s.noise;
        spec.seed = s.seed;
        d.train = inject(d.train, spec).dataset;
    }

    if (s.valid_fraction > 0.0) {
        SplitResult parts = split(d.train, SplitSpec{s.valid_fraction, s.seed});
        d.train = std::move(parts.train);
        d.valid = std::move(parts.valid);
        d.has_valid = d.valid.size() > 0;
    }
    return d;
}

} // namespace

RunReport execute_run(const RunSettings& s) {
    const RunData data = load_run_data(s);

    ExtractorMode mode = ExtractorMode::mlp;
    std::size_t feature_dim = s.feature_dim;
    if (data.train.kind == DatasetKind::feature) {
        mode = ExtractorMode::identity;
        feature_dim = data.train.dim;
    } else if (s.adapter) {
        mode = ExtractorMode::residual_adapter;
        feature_dim = data.train.dim;
    }
    auto [ext, head] = init_model(data.train.dim, s.hidden, feature_dim,
                                  data.train.num_classes, s.seed, mode);

    if (ext.has_params()) {
        if (!data.has_pretrain)
            throw ConfigError("pretrain bundle required for a parametric extractor");
        pretrain_extractor(ext, data.pretrain, s.seed);
    }

    const Dataset* valid = data.has_valid ? &data.valid : nullptr;
    if (s.method == "turn") {
        TurnConfig tc;
        tc.e_lp = s.e_lp;
        tc.e_fft = s.e_fft;
        tc.gce_q = s.gce_q;
        tc.cleansing = s.cleansing;
        tc.lp_enabled = s.lp_enabled;
        tc.reinit_head = s.reinit_head;
        tc.lp_optim = s.lp_optim;
        tc.fft_optim = s.fft_optim;
        tc.batch_size = s.batch;
        tc.selection.tau = s.tau;
        tc.selection.min_class_fit = s.min_class_fit;
        tc.selection.per_class = s.per_class;
        tc.seed = s.seed;
        return run_turn(ext, head, data.train, data.test, valid, tc);
    }

    BaselineConfig bc;
    bc.method = loss_kind_from_string(s.method);
    bc.tuning = s.tuning;
    bc.epochs = s.epochs;
    bc.gce_q = s.gce_q;
    bc.elr_beta = s.elr_beta;
    bc.elr_lambda = s.elr_lambda;
    bc.lp_optim = s.lp_optim;
    bc.fft_optim = s.fft_optim;
    bc.batch_size = s.batch;
    bc.seed = s.seed;
    return run_baseline(ext, head, data.train, data.test, valid, bc);
}

std::string summary_csv_header() {
    return "method,tuning,noise_kind,ratio,tau,e_lp,e_fft,seed,best_acc,last_acc,"
           "final_purity,wall_ms";
}

std::string summary_csv_row(const RunSettings& s, const RunReport& rep) {
    std::ostringstream out;
    out << rep.method << ',' << rep.tuning << ',' << to_string(s.noise.kind) << ','
        << format_double(s.noise.ratio, 4) << ',' << format_double(s.tau, 4) << ','
        << s.e_lp << ',' << s.e_fft << ',' << s.seed << ','
        << format_double(rep.best_acc, 6) << ',' << format_double(rep.last_acc, 6)
        << ',';
    if (rep.final_purity.has_value())
        out << format_double(*rep.final_purity, 6);
    else
        out << "na";
    out << ',' << format_double(rep.total_wall_ms, 3);
    return out.str();
}

void write_metrics_jsonl(const fs::path& path, const std::string& run_id,
                         const RunReport& rep) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    for (const auto& r : rep.epochs) {
        nlohmann::json j;
        j["run_id"] = run_id;
        j["stage"] = r.stage;
        j["epoch"] = r.epoch;
        j["train_loss"] = r.train_loss;
        j["test_acc"] = r.test_acc;
        j["val_acc"] = r.val_acc.has_value() ? nlohmann::json(*r.val_acc)
                                             : nlohmann::json(nullptr);
        j["selected"] = r.selected.has_value() ? nlohmann::json(*r.selected)
                                               : nlohmann::json(nullptr);
        j["purity"] = r.purity.has_value() ? nlohmann::json(*r.purity)
                                           : nlohmann::json(nullptr);
        j["wall_ms"] = r.wall_ms;
        j["select_ms"] = r.select_ms;
        out << j.dump() << '\n';
    }
    if (!out) throw DataError("write failed: " + path.string());
}

int cmd_gen(const fs::path& config_path, const fs::path& out_dir,
            std::optional<std::uint64_t> seed_override) {
    Config cfg = Config::parse_file(config_path);
    if (seed_override.has_value())
        cfg.set("run", "seed", std::to_string(*seed_override));
    for (const auto& [section, key] :
         std::vector<std::pair<std::string, std::string>>{{"noise", "ratio"},
                                                          {"run", "seed"}}) {
        if (cfg.get(section, key, "").find(',') != std::string::npos)
            throw ConfigError("gen does not accept sweep lists (" + section + "." +
                              key + ")");
    }
    const RunSettings s = resolve_settings(cfg);

    Dataset train, test, pretrain;
    bool has_pretrain = false;
    if (s.source == "synthetic") {
        SyntheticBundle bundle = generate_synthetic(s.synth);
        train = std::move(bundle.train);
        test = std::move(bundle.test);
        pretrain = std::move(bundle.pretrain);
        has_pretrain = pretrain.size() > 0;
    } else {
        train = read_dataset(s.data_path / "train");
        test = read_dataset(s.data_path / "test");
        if (fs::exists(s.data_path / "pretrain")) {
            pretrain = read_dataset(s.data_path / "pretrain");
            has_pretrain = true;
        }
    }

    fs::create_directories(out_dir);
    write_dataset(train, out_dir / "train");
    write_dataset(test, out_dir / "test");
    if (has_pretrain) write_dataset(pretrain, out_dir / "pretrain");

    if (s.noise.kind != NoiseKind::none) {
        const NoisyDataset noisy = inject(train, s.noise);
        write_dataset(noisy.dataset, out_dir / "train_noisy");

        std::size_t flipped = 0;
        std::vector<std::size_t> per_class(train.num_classes, 0);
        for (std::size_t i = 0; i < noisy.flip_mask.size(); ++i) {
            if (noisy.flip_mask[i]) {
                ++flipped;
                ++per_class[train.given_labels[i]];
            }
        }
        const fs::path rp = out_dir / "noise_report.txt";
        std::ofstream out(rp, std::ios::trunc);
        if (!out) throw DataError("cannot write " + rp.string());
        out << "kind = " << to_string(s.noise.kind) << "\n";
        out << "ratio = " << format_double(s.noise.ratio, 6) << "\n";
        out << "total = " << train.size() << "\n";
        out << "flipped = " << flipped << "\n";
        out << "fraction = "
            << format_double(static_cast<double>(flipped) /
                                 static_cast<double>(train.size()),
                             6)
            << "\n";
        for (std::size_t c = 0; c < per_class.size(); ++c)
            out << "flipped_from_class_" << c << " = " << per_class[c] << "\n";
        if (!out) throw DataError("write failed: " + rp.string());
    }
    return 0;
}

int cmd_run(const fs::path& config_path, const fs::path& out_dir,
            std::optional<std::uint64_t> seed_override, bool deterministic) {
    Config cfg = Config::parse_file(config_path);
    if (seed_override.has_value())
        cfg.set("run", "seed", std::to_string(*seed_override));
    if (deterministic) cfg.set("run", "deterministic", "true");

    std::vector<RunSettings> runs = expand_runs(cfg);
    fs::create_directories(out_dir);

    const fs::path summary_path = out_dir / "summary.csv";
    const bool fresh_summary = !fs::exists(summary_path);
    std::ofstream summary(summary_path, std::ios::app);
    if (!summary) throw DataError("cannot open " + summary_path.string());
    if (fresh_summary) summary << summary_csv_header() << '\n';

    const std::size_t n = runs.size();
    std::vector<std::optional<RunReport>> reports(n);
    std::vector<std::optional<RunFailure>> failures(n);
    std::vector<bool> done(n, false);
    std::mutex mu;
    std::condition_variable cv;
    std::atomic<std::size_t> next_run{0};

    auto worker = [&]() {
        while (true) {
            const std::size_t i = next_run.fetch_add(1);
            if (i >= n) return;
            try {
                RunReport rep = execute_run(runs[i]);
                const fs::path run_dir = out_dir / runs[i].run_id;
                fs::create_directories(run_dir);
                write_metrics_jsonl(run_dir / "metrics.jsonl", runs[i].run_id, rep);
                std::lock_guard<std::mutex> lock(mu);
                reports[i] = std::move(rep);
            } catch (const ConfigError& e) {
                std::lock_guard<std::mutex> lock(mu);
                failures[i] = RunFailure{runs[i].run_id, "config", e.what()};
            } catch (const DataError& e) {
                std::lock_guard<std::mutex> lock(mu);
                failures[i] = RunFailure{runs[i].run_id, "data", e.what()};
            } catch (const NumericError& e) {
                std::lock_guard<std::mutex> lock(mu);
                failures[i] = RunFailure{runs[i].run_id, "numeric", e.what()};
            }
            {
                std::lock_guard<std::mutex> lock(mu);
                done[i] = true;
            }
            cv.notify_all();
        }
    };

    const std::size_t threads = worker_count(deterministic, n);
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);

    // Summary rows are written in run order regardless of completion order.
    for (std::size_t i = 0; i < n; ++i) {
        std::unique_lock<std::mutex> lock(mu);
        cv.wait(lock, [&] { return done[i]; });
        if (reports[i].has_value()) {
            summary << summary_csv_row(runs[i], *reports[i]) << '\n';
            summary.flush();
        }
    }
    for (auto& t : pool) t.join();

    std::vector<RunFailure> failed;
    for (auto& f : failures) {
        if (f.has_value()) failed.push_back(*f);
    }
    if (failed.empty()) return 0;
    for (const auto& f : failed)
        std::cerr << f.kind << " failure in " << f.run_id << ": " << f.message << '\n';
    for (const auto& kind : {"config", "data", "numeric"}) {
        for (const auto& f : failed) {
            if (f.kind != kind) continue;
            const std::string msg = "run " + f.run_id + ": " + f.message;
            if (f.kind == "config") throw ConfigError(msg);
            if (f.kind == "data") throw DataError(msg);
            throw NumericError(msg);
        }
    }
    return 0;
}

namespace {

struct SummaryRowData {
    std::string method, tuning, noise_kind;
    std::string ratio, tau, e_lp, e_fft, seed;
    double best = 0.0, last = 0.0;

    std::string dedup_key() const {
        return method + '|' + tuning + '|' + noise_kind + '|' + ratio + '|' + tau +
               '|' + e_lp + '|' + e_fft + '|' + seed;
    }
};

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    return fields;
}

} // namespace

int cmd_report(const std::vector<fs::path>& inputs, const fs::path& out_path) {
    std::vector<SummaryRowData> rows;
    std::set<std::string> seen;
    for (const fs::path& input : inputs) {
        const fs::path csv = fs::is_directory(input) ? input / "summary.csv" : input;
        std::ifstream in(csv);
        if (!in) throw DataError("cannot open " + csv.string());
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (first) {
                first = false;
                if (line.rfind("method,", 0) == 0) continue;
            }
            const auto f = split_csv_line(line);
            if (f.size() < 12)
                throw DataError(csv.string() + ": malformed summary row '" + line + "'");
            SummaryRowData row;
            row.method = f[0];
            row.tuning = f[1];
            row.noise_kind = f[2];
            row.ratio = f[3];
            row.tau = f[4];
            row.e_lp = f[5];
            row.e_fft = f[6];
            row.seed = f[7];
            row.best = parse_double(f[8], "best_acc");
            row.last = parse_double(f[9], "last_acc");
            if (!seen.insert(row.dedup_key()).second) {
                std::cerr << "warning: duplicate run " << row.dedup_key()
                          << " ignored\n";
                continue;
            }
            rows.push_back(std::move(row));
        }
    }

    // rows = method x tuning, columns = noise settings, cells = mean over seeds
    std::set<std::string> columns;
    std::map<std::string, std::map<std::string, std::pair<double, double>>> sums;
    std::map<std::string, std::map<std::string, std::size_t>> counts;
    std::vector<std::string> row_order;
    for (const auto& row : rows) {
        const std::string rkey = row.method == "turn" ? std::string("turn")
                                                      : row.method + '-' + row.tuning;
        const std::string ckey = row.noise_kind + '@' + row.ratio;
        columns.insert(ckey);
        if (!sums.count(rkey)) row_order.push_back(rkey);
        auto& cell = sums[rkey][ckey];
        cell.first += row.best;
        cell.second += row.last;
        counts[rkey][ckey] += 1;
    }
    const std::vector<std::string> preferred = {"ce-lp",  "ce-fft", "gce-lp",
                                                "gce-fft", "elr-lp", "elr-fft",
                                                "turn"};
    std::vector<std::string> ordered;
    for (const auto& name : preferred) {
        if (sums.count(name)) ordered.push_back(name);
    }
    std::sort(row_order.begin(), row_order.end());
    for (const auto& name : row_order) {
        if (std::find(ordered.begin(), ordered.end(), name) == ordered.end())
            ordered.push_back(name);
    }

    std::ofstream out(out_path, std::ios::trunc);
    if (!out) throw DataError("cannot write " + out_path.string());
    out << "method";
    for (const auto& c : columns) out << ',' << c;
    out << '\n';
    for (const auto& r : ordered) {
        out << r;
        for (const auto& c : columns) {
            out << ',';
            const auto cit = sums[r].find(c);
            if (cit == sums[r].end()) continue;
            const double k = static_cast<double>(counts[r][c]);
            out << format_double(cit->second.first / k, 3) << " / "
                << format_double(cit->second.second / k, 3);
        }
        out << '\n';
    }
    if (!out) throw DataError("write failed: " + out_path.string());
    return 0;
}

} // namespace turnlnl
