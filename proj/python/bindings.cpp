#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "batchol/datagen.hpp"
#include "batchol/error.hpp"
#include "batchol/experiment.hpp"
#include "batchol/io.hpp"
#include "batchol/learner.hpp"
#include "batchol/metrics.hpp"
#include "batchol/model.hpp"
#include "batchol/objective.hpp"
#include "batchol/optimizers.hpp"
#include "batchol/theory.hpp"

namespace py = pybind11;
using namespace batchol;

namespace {

// Accepts a dict {index: value} or a list of (index, value) pairs.
SparseVector to_sparse(const py::handle& obj) {
    std::vector<std::pair<std::uint32_t, double>> items;
    if (py::isinstance<py::dict>(obj)) {
        for (const auto& [k, v] : obj.cast<py::dict>()) items.emplace_back(k.cast<std::uint32_t>(), v.cast<double>());
        std::sort(items.begin(), items.end());
    } else {
        items = obj.cast<std::vector<std::pair<std::uint32_t, double>>>();
    }
    std::vector<Feature> fs;
    fs.reserve(items.size());
    for (const auto& [i, v] : items) fs.push_back({i, v});
    return SparseVector(std::move(fs));
}

Batch make_batch(const py::iterable& features, const std::vector<int>& labels, std::int64_t id) {
    Batch b;
    b.id = id;
    for (const auto& f : features) b.examples.push_back({to_sparse(f), 0});
    if (labels.size() != b.examples.size()) throw DimensionMismatch("features and labels differ in length");
    for (std::size_t j = 0; j < labels.size(); ++j) b.examples[j].label = labels[j];
    return b;
}

py::dict record_dict(const MetricRecord& r) {
    py::dict d;
    d["batch_id"] = r.batch_id;
    d["n"] = r.n;
    d["ctr"] = r.ctr;
    d["logloss_model"] = r.logloss_model;
    d["logloss_ctr"] = r.logloss_ctr;
    d["rig"] = r.rig;
    d["auc"] = r.auc;
    return d;
}

py::dict bound_dict(const BoundReport& r) {
    py::dict d;
    d["alpha"] = r.alpha;
    d["k"] = r.k;
    d["lambda"] = r.lambda;
    d["lhs"] = r.lhs;
    d["rhs"] = r.rhs;
    d["epsilon"] = r.epsilon;
    d["distance"] = r.distance;
    d["holds"] = r.holds;
    d["intermediate_holds"] = r.intermediate_holds;
    d["guaranteed"] = r.guaranteed;
    d["degenerate"] = r.degenerate;
    d["identity_deviation"] = r.identity_deviation;
    return d;
}

}  // namespace

PYBIND11_MODULE(_batchol, m) {
    m.doc() = "Batch online learning for logistic click prediction";

    py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

    py::class_<LinearModel>(m, "LinearModel")
        .def(py::init<std::size_t>(), py::arg("dimension"))
        .def(py::init<std::vector<double>, double>(), py::arg("weights"), py::arg("bias") = 0.0)
        .def_property_readonly("dimension", &LinearModel::dimension)
        .def_property_readonly("weights",
                               [](const LinearModel& lm) {
                                   return std::vector<double>(lm.weights().begin(), lm.weights().end());
                               })
        .def_property_readonly("bias", &LinearModel::bias)
        .def("params", &LinearModel::params)
        .def("__eq__", [](const LinearModel& a, const LinearModel& b) { return a == b; })
        .def("__repr__",
             [](const LinearModel& lm) { return "LinearModel(dimension=" + std::to_string(lm.dimension()) + ")"; });

    py::class_<Batch>(m, "Batch")
        .def(py::init(&make_batch), py::arg("features"), py::arg("labels"), py::arg("id") = 0,
             "features: one dict {index: value} or list of (index, value) pairs per example")
        .def_readonly("id", &Batch::id)
        .def("__len__", &Batch::size)
        .def_property_readonly("labels", [](const Batch& b) {
            std::vector<int> y;
            for (const auto& e : b.examples) y.push_back(e.label);
            return y;
        });

    m.def("sigmoid", &sigmoid);
    m.def("predict", [](const LinearModel& lm, const py::handle& x) { return predict(lm, to_sparse(x)); });
    m.def("logistic_loss", &logistic_loss, py::arg("model"), py::arg("batch"));
    m.def("gradient", &gradient, py::arg("model"), py::arg("batch"));
    m.def(
        "prox_objective",
        [](const LinearModel& lm, const Batch& b, const LinearModel& anchor, double lambda) {
            return prox_objective(lm, b, ProxConfig{anchor, lambda, true});
        },
        py::arg("model"), py::arg("batch"), py::arg("anchor"), py::arg("lam"));

    m.def(
        "auc", [](const std::vector<double>& s, const std::vector<int>& y) { return auc(s, y); }, py::arg("scores"),
        py::arg("labels"));
    m.def("rig", &rig, py::arg("logloss_model"), py::arg("logloss_ctr"));
    m.def("evaluate", [](const LinearModel& lm, const Batch& b) { return record_dict(evaluate(lm, b)); });

    m.def(
        "es_update",
        [](const LinearModel& lm, const Batch& b, double learning_rate, int passes) {
            EsStrategy s;
            s.learning_rate = learning_rate;
            s.passes = passes;
            return es_update(lm, b, s).model;
        },
        py::arg("model"), py::arg("batch"), py::arg("learning_rate"), py::arg("passes"));
    m.def(
        "prox_update",
        [](const LinearModel& lm, const Batch& b, double lambda) {
            ProxStrategy s;
            s.lambda = lambda;
            return prox_update(lm, b, s, s.solver);
        },
        py::arg("model"), py::arg("batch"), py::arg("lam"));

    m.def(
        "quadratic_bound",
        [](double alpha, int k, double lambda, std::vector<double> w0) {
            const auto f = make_quadratic(std::vector<double>(w0.size(), 0.0));
            return bound_dict(theorem1_check(f, w0, alpha, k, lambda,
                                             {.gradient_tolerance = 1e-13, .max_iterations = 2000}));
        },
        py::arg("alpha"), py::arg("k"), py::arg("lam"), py::arg("w0") = std::vector<double>{1.0},
        "Bound check for F(w) = ||w||^2 / 2 started at w0");
    m.def(
        "guarantee_suite",
        [](int instances, std::uint64_t seed) {
            const auto r = run_guarantee_suite(instances, seed);
            py::dict d;
            d["instances"] = r.instances;
            d["held"] = r.held;
            d["diverged"] = r.diverged;
            d["max_identity_deviation"] = r.max_identity_deviation;
            return d;
        },
        py::arg("instances"), py::arg("seed"));

    m.def(
        "generate_stream",
        [](std::size_t dimension, int days, std::size_t examples_per_day, std::size_t active_features,
           double drift_rate, double shift_rate, double weight_scale, std::uint64_t seed) {
            StreamSpec s;
            s.dimension = dimension;
            s.days = days;
            s.examples_per_day = examples_per_day;
            s.active_features = active_features;
            s.drift_rate = drift_rate;
            s.distribution_shift_rate = shift_rate;
            s.weight_scale = weight_scale;
            s.seed = seed;
            return generate_stream(s).batches;
        },
        py::arg("dimension") = 200, py::arg("days") = 90, py::arg("examples_per_day") = 20000,
        py::arg("active_features") = 10, py::arg("drift_rate") = 0.02, py::arg("shift_rate") = 0.3,
        py::arg("weight_scale") = 0.6, py::arg("seed") = 42);

    m.def("config_hash", [](const std::filesystem::path& p) { return config_hash(load_config(p)); });
    m.def(
        "run_experiment",
        [](const std::filesystem::path& config, const std::filesystem::path& output_dir, int workers) {
            auto cfg = load_config(config);
            cfg.output_dir = output_dir;
            cfg.workers = workers;
            cfg.validate();
            ExperimentResult res;
            {
                py::gil_scoped_release release;
                res = run_experiment(cfg);
            }
            py::dict d;
            d["config_hash"] = res.config_hash;
            d["outputs"] = res.outputs;
            d["failures"] = res.failures;
            d["theorem_violation"] = res.theorem_violation();
            d["wall_clock_seconds"] = res.wall_clock_seconds;
            return d;
        },
        py::arg("config"), py::arg("output_dir"), py::arg("workers") = 1);

    m.attr("__version__") = BATCHOL_VERSION;
}
