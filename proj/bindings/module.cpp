#include <algorithm>
#include <fstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "turnlnl/config.hpp"
#include "turnlnl/dataset.hpp"
#include "turnlnl/errors.hpp"
#include "turnlnl/experiment.hpp"
#include "turnlnl/losses.hpp"
#include "turnlnl/noise.hpp"
#include "turnlnl/select.hpp"

namespace py = pybind11;
using namespace turnlnl;

namespace {

py::dict dataset_to_dict(const Dataset& d) {
    py::dict out;
    out["inputs"] = d.inputs;
    out["dim"] = d.dim;
    out["given_labels"] = d.given_labels;
    out["true_labels"] = d.true_labels;
    out["classes"] = d.num_classes;
    out["kind"] = to_string(d.kind);
    return out;
}

py::dict gmm_to_dict(const Gmm1D& g) {
    py::dict out;
    out["means"] = std::vector<double>{g.mean[0], g.mean[1]};
    out["vars"] = std::vector<double>{g.var[0], g.var[1]};
    out["weights"] = std::vector<double>{g.weight[0], g.weight[1]};
    out["iters"] = g.iters;
    out["converged"] = g.converged;
    out["degenerate"] = g.degenerate();
    return out;
}

py::dict report_to_dict(const RunSettings& s, const RunReport& rep) {
    py::dict out;
    out["run_id"] = s.run_id;
    out["method"] = rep.method;
    out["tuning"] = rep.tuning;
    out["seed"] = rep.seed;
    out["best_acc"] = rep.best_acc;
    out["last_acc"] = rep.last_acc;
    out["epochs"] = rep.epochs.size();
    if (rep.final_purity.has_value())
        out["final_purity"] = *rep.final_purity;
    else
        out["final_purity"] = py::none();
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Noisy-label training toolkit: losses, GMM selection, pipelines";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<DataError>(m, "DataError");
    py::register_exception<NumericError>(m, "NumericError");

    m.def(
        "generate_synthetic",
        [](std::uint32_t classes, std::size_t dim, std::size_t train_pc,
           std::size_t test_pc, std::size_t pretrain_pc, double separation,
           std::uint64_t seed) {
            SyntheticSpec spec;
            spec.num_classes = classes;
            spec.input_dim = dim;
            spec.per_class_train = train_pc;
            spec.per_class_test = test_pc;
            spec.per_class_pretrain = pretrain_pc;
            spec.separation = separation;
            spec.seed = seed;
            const SyntheticBundle b = generate_synthetic(spec);
            py::dict out;
            out["train"] = dataset_to_dict(b.train);
            out["test"] = dataset_to_dict(b.test);
            out["pretrain"] = dataset_to_dict(b.pretrain);
            return out;
        },
        py::arg("classes"), py::arg("dim"), py::arg("train_per_class"),
        py::arg("test_per_class"), py::arg("pretrain_per_class"),
        py::arg("separation"), py::arg("seed"));

    m.def(
        "ce_loss",
        [](const std::vector<double>& logits, std::uint32_t label) {
            std::vector<double> grad(logits.size());
            const double loss = ce_loss_grad(logits, label, grad);
            return py::make_tuple(loss, grad);
        },
        py::arg("logits"), py::arg("label"));

    m.def(
        "gce_loss",
        [](const std::vector<double>& logits, std::uint32_t label, double q) {
            std::vector<double> grad(logits.size());
            const double loss = gce_loss_grad(logits, label, q, grad);
            return py::make_tuple(loss, grad);
        },
        py::arg("logits"), py::arg("label"), py::arg("q") = 0.7);

    m.def(
        "fit_gmm1d",
        [](const std::vector<double>& values, std::size_t max_iters, double tol) {
            SelectionConfig cfg;
            cfg.max_iters = max_iters;
            cfg.tol = tol;
            return gmm_to_dict(fit_gmm1d(values, cfg));
        },
        py::arg("values"), py::arg("max_iters") = 100, py::arg("tol") = 1e-6);

    m.def(
        "posterior_low",
        [](const std::vector<double>& means, const std::vector<double>& vars,
           const std::vector<double>& weights, double v) {
            if (means.size() != 2 || vars.size() != 2 || weights.size() != 2)
                throw ConfigError("posterior_low expects two components");
            Gmm1D g;
            g.mean[0] = means[0];
            g.mean[1] = means[1];
            g.var[0] = vars[0];
            g.var[1] = vars[1];
            g.weight[0] = weights[0];
            g.weight[1] = weights[1];
            return posterior_low(g, v);
        },
        py::arg("means"), py::arg("vars"), py::arg("weights"), py::arg("value"));

    m.def(
        "select_clean",
        [](const std::vector<double>& losses,
           const std::vector<std::uint32_t>& given_labels, std::size_t classes,
           double tau, std::size_t min_class_fit, bool per_class,
           std::uint64_t seed) {
            LossVector lv;
            lv.values = losses;
            const auto [lo, hi] = std::minmax_element(losses.begin(), losses.end());
            lv.min_value = *lo;
            lv.max_value = *hi;
            SelectionConfig cfg;
            cfg.tau = tau;
            cfg.min_class_fit = min_class_fit;
            cfg.per_class = per_class;
            cfg.seed = seed;
            const SelectionResult r = select_clean(lv, given_labels, classes, cfg);
            py::dict out;
            out["indices"] = r.indices;
            out["candidates"] = r.class_candidates;
            out["per_class_n"] = r.per_class_n;
            return out;
        },
        py::arg("losses"), py::arg("given_labels"), py::arg("classes"),
        py::arg("tau") = 0.6, py::arg("min_class_fit") = 20,
        py::arg("per_class") = true, py::arg("seed") = 0);

    m.def(
        "selection_purity",
        [](const std::vector<std::uint32_t>& indices,
           const std::vector<std::uint32_t>& given,
           const std::vector<std::uint32_t>& truth) -> py::object {
            const auto p = selection_purity(indices, given, truth);
            if (!p.has_value()) return py::none();
            return py::float_(*p);
        },
        py::arg("indices"), py::arg("given_labels"), py::arg("true_labels"));

    m.def(
        "run_config",
        [](const std::string& config_text, const std::filesystem::path& out_dir) {
            const Config cfg = Config::parse_string(config_text, "<python>");
            const auto runs = expand_runs(cfg);
            std::filesystem::create_directories(out_dir);
            const auto summary_path = out_dir / "summary.csv";
            const bool fresh = !std::filesystem::exists(summary_path);
            std::ofstream summary(summary_path, std::ios::app);
            if (!summary) throw DataError("cannot open " + summary_path.string());
            if (fresh) summary << summary_csv_header() << '\n';
            py::list out;
            for (const auto& s : runs) {
                const RunReport rep = execute_run(s);
                const auto run_dir = out_dir / s.run_id;
                std::filesystem::create_directories(run_dir);
                write_metrics_jsonl(run_dir / "metrics.jsonl", s.run_id, rep);
                summary << summary_csv_row(s, rep) << '\n';
                out.append(report_to_dict(s, rep));
            }
            return out;
        },
        py::arg("config_text"), py::arg("out_dir"),
        "Parse a config, execute every sweep point sequentially, write "
        "metrics.jsonl and summary.csv under out_dir, return per-run results");
}
