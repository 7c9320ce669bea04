// Python bindings for the main operations: dataset generation, training,
// evaluation, sweeps, analysis and rollouts.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "vand/error.hpp"
#include "vand/tasks.hpp"
#include "vand/trainer.hpp"

namespace py = pybind11;

namespace {

py::array_t<double> tensor_to_array(const vand::Tensor& t) {
    std::vector<ssize_t> shape;
    for (int d : t.shape()) shape.push_back(d);
    py::array_t<double> arr(shape);
    std::copy(t.data(), t.data() + t.numel(), arr.mutable_data());
    return arr;
}

py::list dataset_to_list(const vand::Dataset& dataset) {
    py::list out;
    for (const vand::Trajectory& traj : dataset) {
        py::dict d;
        d["id"] = traj.id;
        d["x"] = tensor_to_array(traj.x);
        d["y"] = tensor_to_array(traj.y);
        out.append(std::move(d));
    }
    return out;
}

vand::TrainConfig config_from_dict(const py::dict& config) {
    const std::string text =
        py::module_::import("json").attr("dumps")(config).cast<std::string>();
    return vand::train_config_from_json_text(text);
}

py::dict result_to_dict(const vand::ConditionResult& r) {
    py::dict d;
    d["task"] = r.task;
    d["mode"] = r.mode;
    d["seed"] = r.seed;
    d["mse_norm"] = r.mse_norm;
    d["mse_raw"] = r.mse_raw;
    d["diverged"] = r.diverged;
    d["wall_s"] = r.wall_s;
    d["nll"] = r.nll_curve;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Recurrent sequence learning with variational adaptive noise and dropout";
    m.attr("__version__") = "0.1.0";

    m.def(
        "generate",
        [](const std::string& task, int n, int steps, uint64_t seed, double noise,
           uint64_t task_seed) {
            vand::TaskSpec spec;
            spec.kind = vand::task_from_string(task);
            spec.n_traj = n;
            spec.steps = steps;
            spec.seed = seed;
            spec.obs_noise = noise;
            spec.program_seed = task_seed;
            return dataset_to_list(vand::generate(spec));
        },
        py::arg("task"), py::arg("n"), py::arg("steps"), py::arg("seed") = 0,
        py::arg("noise") = -1.0, py::arg("task_seed") = vand::kDefaultProgramSeed,
        "Generate a synthetic task dataset as a list of {id, x, y} dicts.");

    m.def(
        "gen_data",
        [](const std::string& task, int n, int steps, uint64_t seed, const std::string& out,
           double noise, uint64_t task_seed) {
            vand::TaskSpec spec;
            spec.kind = vand::task_from_string(task);
            spec.n_traj = n;
            spec.steps = steps;
            spec.seed = seed;
            spec.obs_noise = noise;
            spec.program_seed = task_seed;
            vand::save_dataset(out, vand::generate(spec));
        },
        py::arg("task"), py::arg("n"), py::arg("steps"), py::arg("seed"), py::arg("out"),
        py::arg("noise") = -1.0, py::arg("task_seed") = vand::kDefaultProgramSeed,
        "Generate a synthetic task dataset and write it as a trajectory file.");

    m.def(
        "load_dataset",
        [](const std::string& path) { return dataset_to_list(vand::load_dataset(path)); },
        py::arg("path"));

    m.def(
        "train",
        [](const py::dict& config, const std::string& data, const std::string& test,
           const std::string& model_out) {
            vand::TrainConfig cfg = config_from_dict(config);
            const vand::Dataset train_set = vand::load_dataset(data);
            vand::Dataset test_set;
            if (!test.empty()) test_set = vand::load_dataset(test);
            py::gil_scoped_release release;
            auto [model, result] = vand::train(cfg, train_set, test_set);
            if (!model_out.empty()) vand::save_model(model, model_out);
            py::gil_scoped_acquire acquire;
            return result_to_dict(result);
        },
        py::arg("config"), py::arg("data"), py::arg("test") = std::string(),
        py::arg("model_out") = std::string(),
        "Train one condition; returns {mse_norm, mse_raw, diverged, wall_s, nll}.");

    m.def(
        "evaluate",
        [](const std::string& model_path, const std::string& data_path) {
            vand::StackedModel model = vand::load_model(model_path);
            const vand::Dataset data = vand::load_dataset(data_path);
            return vand::evaluate(model, data);
        },
        py::arg("model"), py::arg("data"),
        "Teacher-forced (normalized, raw) MSE of a saved model.");

    m.def(
        "sweep",
        [](const py::dict& config, const std::vector<std::string>& modes,
           const std::vector<uint64_t>& seeds, const std::string& data, const std::string& test,
           const std::string& out_csv, int workers, const std::string& model_dir) {
            vand::TrainConfig cfg = config_from_dict(config);
            std::vector<vand::VandKind> kinds;
            for (const auto& name : modes) kinds.push_back(vand::mode_from_string(name));
            const vand::Dataset train_set = vand::load_dataset(data);
            vand::Dataset test_set;
            if (!test.empty()) test_set = vand::load_dataset(test);
            std::vector<vand::ConditionResult> rows;
            {
                py::gil_scoped_release release;
                rows = vand::run_matrix(cfg, kinds, seeds, train_set, test_set, out_csv, workers,
                                        model_dir);
            }
            py::list out;
            for (const auto& r : rows) out.append(result_to_dict(r));
            return out;
        },
        py::arg("config"), py::arg("modes"), py::arg("seeds"), py::arg("data"),
        py::arg("test") = std::string(), py::arg("out_csv") = std::string(),
        py::arg("workers") = 1, py::arg("model_dir") = std::string(),
        "Train a modes x seeds matrix; returns one result dict per run.");

    m.def(
        "analyze",
        [](const std::string& model_path) {
            const vand::StackedModel model = vand::load_model(model_path);
            py::list out;
            for (const vand::LayerStats& s : vand::analyze_params(model)) {
                py::dict d;
                d["layer"] = s.layer;
                d["sigma"] = py::cast(s.sigma);
                d["beta"] = py::cast(s.beta);
                d["sigma_median"] = s.sigma_median;
                d["beta_median"] = s.beta_median;
                d["sigma_iqr"] = s.sigma_iqr;
                d["beta_iqr"] = s.beta_iqr;
                out.append(std::move(d));
            }
            return out;
        },
        py::arg("model"), "Learned per-unit (sigma, beta) with per-layer medians and IQRs.");

    m.def(
        "rollout",
        [](const std::string& model_path, const std::string& kind, const std::string& data_path,
           int horizon, int prefix, int traj) {
            vand::StackedModel model = vand::load_model(model_path);
            const vand::Dataset data = vand::load_dataset(data_path);
            if (traj < 0 || traj >= static_cast<int>(data.size())) {
                throw vand::ValueError("rollout: trajectory index out of range");
            }
            vand::ModelPolicy policy(model);
            const vand::RolloutResult r = vand::rollout(
                policy, vand::task_from_string(kind), horizon, data[static_cast<size_t>(traj)],
                prefix);
            py::dict out;
            out["states"] = tensor_to_array(r.states);
            out["preds"] = tensor_to_array(r.preds);
            out["recorded"] = r.recorded;
            out["diverged"] = r.diverged;
            return out;
        },
        py::arg("model"), py::arg("kind"), py::arg("data"), py::arg("horizon") = 1200,
        py::arg("prefix") = 10, py::arg("traj") = 0,
        "Closed-loop rollout; returns {states, preds, recorded, diverged}.");

    py::register_exception<vand::Error>(m, "VandError");
}
