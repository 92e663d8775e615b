#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cuci/api.hpp"
#include "cuci/config.hpp"
#include "cuci/errors.hpp"

namespace py = pybind11;
using namespace cuci;

namespace {

py::list report_to_list(const MetricsReport& report) {
    py::list out;
    for (const auto& r : report.scopes) {
        py::dict row;
        row["scope"] = std::string(scope_name(r.scope));
        row["epoch"] = report.epoch;
        if (r.metrics) {
            row["precision"] = r.metrics->precision;
            row["recall"] = r.metrics->recall;
            row["f1"] = r.metrics->f1;
            row["accuracy"] = r.metrics->accuracy;
            row["count"] = r.metrics->count;
        } else {
            row["precision"] = py::none();
            row["recall"] = py::none();
            row["f1"] = py::none();
            row["accuracy"] = py::none();
            row["count"] = 0;
        }
        out.append(row);
    }
    return out;
}

py::dict bundle_summary(const DatasetBundle& bundle) {
    py::dict out;
    out["size"] = bundle.size();
    out["num_classes"] = bundle.manifest.num_classes;
    out["dims"] = py::make_tuple(bundle.manifest.dims.text, bundle.manifest.dims.audio, bundle.manifest.dims.visual);
    out["train"] = bundle.manifest.train.size();
    out["val"] = bundle.manifest.val.size();
    out["test"] = bundle.manifest.test.size();
    return out;
}

std::optional<std::filesystem::path> optional_path(const std::optional<std::string>& p) {
    if (!p) return std::nullopt;
    return std::filesystem::path(*p);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of the cuci toolkit";

    auto base = py::register_exception<Error>(m, "CuciError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<PreconditionError>(m, "PreconditionError", base.ptr());
    py::register_exception<LoadError>(m, "LoadError", base.ptr());
    py::register_exception<SchemaError>(m, "SchemaError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

    m.def("variant_ids", &variant_ids, "Known ablation variant ids.");
    m.def(
        "preset_config", [](const std::string& name) { return dump_config(preset_by_name(name)); }, py::arg("name"),
        "Config JSON text of a named preset (paper or desk).");
    m.def(
        "normalize_config", [](const std::string& text) { return dump_config(parse_config(text)); }, py::arg("text"),
        "Parses and validates config JSON text and returns the full echo.");

    m.def(
        "generate",
        [](const std::string& out_dir, std::size_t n, std::uint64_t seed, double snr, std::tuple<int, int, int> dims,
           std::size_t len_ctx, std::size_t len_utt, int num_cues, double val_fraction, double test_fraction) {
            SyntheticConfig c;
            c.num_samples = n;
            c.snr = snr;
            const auto [t, a, v] = dims;
            if (t <= 0 || a <= 0 || v <= 0) throw ConfigError("dims must be positive");
            c.dims = {static_cast<std::size_t>(t), static_cast<std::size_t>(a), static_cast<std::size_t>(v)};
            c.len_ctx = len_ctx;
            c.len_utt = len_utt;
            c.num_cues = num_cues;
            c.val_fraction = val_fraction;
            c.test_fraction = test_fraction;
            py::gil_scoped_release release;
            auto bundle = api::generate(c, seed, out_dir);
            py::gil_scoped_acquire acquire;
            return bundle_summary(bundle);
        },
        py::arg("out_dir"), py::arg("n"), py::arg("seed"), py::arg("snr") = 4.0, py::arg("dims") = std::make_tuple(16, 8, 8),
        py::arg("len_ctx") = 4, py::arg("len_utt") = 4, py::arg("num_cues") = 2, py::arg("val_fraction") = 0.1,
        py::arg("test_fraction") = 0.1, "Writes a synthetic incongruity dataset and returns its summary.");

    m.def(
        "load_data", [](const std::string& path) { return bundle_summary(api::load_data(path)); }, py::arg("path"),
        "Validates a dataset directory or manifest and returns its summary.");

    m.def(
        "train",
        [](const std::string& config_json, const std::string& data, const std::optional<std::string>& out_dir) {
            const auto config = parse_config(config_json);
            api::TrainSummary s;
            {
                py::gil_scoped_release release;
                s = api::train(config, data, optional_path(out_dir));
            }
            py::dict out;
            out["best_epoch"] = s.best_epoch;
            out["best_val_f1"] = s.best_val_f1;
            out["steps"] = s.steps;
            out["train_loss"] = s.train_loss;
            out["val_f1"] = s.val_f1;
            out["test"] = report_to_list(s.test);
            return out;
        },
        py::arg("config_json"), py::arg("data"), py::arg("out_dir") = py::none(), "Trains one model.");

    m.def(
        "evaluate",
        [](const std::string& checkpoint, const std::string& data, const std::string& scope) {
            MetricsReport r;
            {
                py::gil_scoped_release release;
                r = api::evaluate(checkpoint, data, scope);
            }
            return report_to_list(r);
        },
        py::arg("checkpoint"), py::arg("data"), py::arg("scope") = "all", "Evaluates a checkpoint on the test split.");

    m.def(
        "predict",
        [](const std::string& checkpoint, const std::string& data) {
            api::PredictionSummary p;
            {
                py::gil_scoped_release release;
                p = api::predict(checkpoint, data);
            }
            py::dict out;
            out["ids"] = p.ids;
            out["labels"] = p.labels;
            out["predicted"] = p.predicted;
            return out;
        },
        py::arg("checkpoint"), py::arg("data"), "Eval-mode predictions for every sample.");

    m.def(
        "ablate",
        [](const std::string& config_json, const std::string& data, const std::string& variant,
           const std::optional<std::string>& out_dir) {
            const auto config = parse_config(config_json);
            api::AblationSummary s;
            {
                py::gil_scoped_release release;
                s = api::ablate(config, data, variant, optional_path(out_dir));
            }
            py::dict out;
            out["variant"] = s.variant;
            out["full"] = report_to_list(s.full);
            out["ablated"] = report_to_list(s.ablated);
            return out;
        },
        py::arg("config_json"), py::arg("data"), py::arg("variant"), py::arg("out_dir") = py::none(),
        "Trains the full model and one ablation variant with the same seed.");

    m.def(
        "sweep_depth",
        [](const std::string& config_json, const std::string& data, const std::vector<int>& depths,
           const std::optional<std::string>& out_dir) {
            const auto config = parse_config(config_json);
            std::vector<DepthRow> rows;
            {
                py::gil_scoped_release release;
                rows = api::sweep_depth(config, data, depths, optional_path(out_dir));
            }
            py::list out;
            for (const auto& r : rows) {
                py::dict row;
                row["depth"] = r.depth;
                row["scope"] = std::string(scope_name(r.scope));
                row["f1"] = r.f1 ? py::cast(*r.f1) : py::none();
                out.append(row);
            }
            return out;
        },
        py::arg("config_json"), py::arg("data"), py::arg("depths"), py::arg("out_dir") = py::none(),
        "One training run per interaction depth.");

    m.def(
        "routing",
        [](const std::string& checkpoint, const std::string& data, const std::string& modality, int layer,
           const std::optional<std::string>& out_file) {
            const auto mod = parse_modality(modality);
            RoutingMatrix r;
            {
                py::gil_scoped_release release;
                r = api::routing(checkpoint, data, mod, layer, optional_path(out_file));
            }
            py::dict out;
            out["matrix"] = std::vector<std::vector<double>>{{r.m[0][0], r.m[0][1]}, {r.m[1][0], r.m[1][1]}};
            out["consistency"] = consistency_score(r);
            out["label_proxy"] = r.label_proxy;
            return out;
        },
        py::arg("checkpoint"), py::arg("data"), py::arg("modality"), py::arg("layer"), py::arg("out_file") = py::none(),
        "Subset-by-expert routing matrix (rows S, NS; columns Con, Dis).");

    m.def(
        "embeddings",
        [](const std::string& checkpoint, const std::string& data, const std::string& out_file) {
            py::gil_scoped_release release;
            return api::embeddings(checkpoint, data, out_file);
        },
        py::arg("checkpoint"), py::arg("data"), py::arg("out_file"), "Writes the fused representation of every sample.");

    m.def(
        "gradcheck",
        [](const std::string& level) {
            const auto lvl = parse_gradcheck_level(level);
            std::vector<GradcheckCase> cases;
            {
                py::gil_scoped_release release;
                cases = api::gradcheck(lvl);
            }
            py::list out;
            for (const auto& c : cases) {
                py::dict row;
                row["block"] = c.block;
                row["max_relative_error"] = c.max_relative_error;
                row["tolerance"] = c.tolerance;
                row["entries"] = c.entries;
                row["worst_entry"] = c.worst_entry;
                row["passed"] = c.passed;
                out.append(row);
            }
            return out;
        },
        py::arg("level") = "unit", "Finite-difference gradient checks.");
}
