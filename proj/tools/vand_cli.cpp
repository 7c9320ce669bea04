// vand: generate synthetic tasks, train the six regularization conditions,
// evaluate, sweep over seeds, analyze learned regularizers and roll out
// trained models. All outputs are plot-ready CSV files.

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#include <CLI11.hpp>

#include "vand/error.hpp"
#include "vand/tasks.hpp"
#include "vand/trainer.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

uint64_t env_seed_or(uint64_t fallback) {
    const char* env = std::getenv("VAND_SEED");
    if (!env || !*env) return fallback;
    try {
        return std::stoull(env);
    } catch (...) {
        throw vand::ValueError("VAND_SEED is not an unsigned integer");
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw vand::IoError("cannot open config file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// accepts "3", "0,1,5" and "0..9"
std::vector<uint64_t> parse_seed_list(const std::string& text) {
    std::vector<uint64_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto dots = item.find("..");
        if (dots != std::string::npos) {
            const uint64_t lo = std::stoull(item.substr(0, dots));
            const uint64_t hi = std::stoull(item.substr(dots + 2));
            if (hi < lo) throw vand::ValueError("seed range '" + item + "' is reversed");
            for (uint64_t s = lo; s <= hi; ++s) out.push_back(s);
        } else {
            out.push_back(std::stoull(item));
        }
    }
    return out;
}

std::vector<vand::VandKind> parse_mode_list(const std::string& text) {
    std::vector<vand::VandKind> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(vand::mode_from_string(item));
    }
    return out;
}

struct TrainFlags {
    std::string config_path, data, test, mode;
    int epochs = -1, hidden = -1, layers = -1, batch_size = -1;
    double lr = -1.0;
    int64_t seed = -1;
};

vand::TrainConfig resolve_config(const TrainFlags& f) {
    vand::TrainConfig cfg;
    bool config_has_seed = false;
    if (!f.config_path.empty()) {
        const std::string text = read_file(f.config_path);
        cfg = vand::train_config_from_json_text(text);
        config_has_seed = text.find("\"seed\"") != std::string::npos;
    }
    if (!f.data.empty()) cfg.data_path = f.data;
    if (!f.test.empty()) cfg.test_path = f.test;
    if (!f.mode.empty()) cfg.mode.kind = vand::mode_from_string(f.mode);
    if (f.epochs >= 0) cfg.epochs = f.epochs;
    if (f.hidden >= 0) cfg.hidden = f.hidden;
    if (f.layers >= 0) cfg.layers = f.layers;
    if (f.batch_size >= 0) cfg.batch_size = f.batch_size;
    if (f.lr >= 0.0) cfg.lr = f.lr;
    if (f.seed >= 0) {
        cfg.seed = static_cast<uint64_t>(f.seed);
    } else if (!config_has_seed) {
        cfg.seed = env_seed_or(cfg.seed);
    }
    return cfg;
}

void write_rollout_csv(const vand::RolloutResult& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw vand::IoError("cannot write rollout file: " + path);
    const int dx = r.states.cols();
    const int dy = r.preds.cols();
    out << "t";
    for (int j = 0; j < dx; ++j) out << ",state_" << j;
    for (int j = 0; j < dy; ++j) out << ",pred_" << j;
    out << "\n";
    for (int i = 0; i < r.recorded; ++i) {
        out << i;
        for (int j = 0; j < dx; ++j) out << "," << vand::fmt_double(r.states.at(i, j));
        for (int j = 0; j < dy; ++j) out << "," << vand::fmt_double(r.preds.at(i, j));
        out << "\n";
    }
}

int cmd_gen_data(const std::string& task, int n, int steps, int64_t seed_flag, double noise,
                 int64_t task_seed, const std::string& out) {
    const vand::TaskKind kind = vand::task_from_string(task);
    vand::TaskSpec spec;
    spec.kind = kind;
    spec.n_traj = n;
    spec.steps = steps;
    spec.obs_noise = noise;
    spec.seed = seed_flag >= 0 ? static_cast<uint64_t>(seed_flag) : env_seed_or(0);
    if (task_seed >= 0) spec.program_seed = static_cast<uint64_t>(task_seed);
    const vand::Dataset dataset = vand::generate(spec);
    vand::save_dataset(out, dataset);
    std::cout << "wrote " << dataset.size() << " trajectories of " << dataset.front().steps()
              << " steps (|X|=" << dataset.front().x_dim() << ", |Y|=" << dataset.front().y_dim()
              << ") to " << out << "\n";
    return kExitOk;
}

int cmd_train(const TrainFlags& flags, const std::string& out_model,
              const std::string& out_metrics) {
    vand::TrainConfig cfg = resolve_config(flags);
    if (cfg.data_path.empty()) throw vand::ValueError("train: no training data given");
    const vand::Dataset train_set = vand::load_dataset(cfg.data_path);
    vand::Dataset test_set;
    if (!cfg.test_path.empty()) test_set = vand::load_dataset(cfg.test_path);

    auto [model, result] = vand::train(cfg, train_set, test_set);
    if (!out_model.empty()) vand::save_model(model, out_model);
    if (!out_metrics.empty()) vand::write_metrics_csv(result, out_metrics);

    if (result.diverged) {
        std::cout << "diverged after " << result.nll_curve.size() << " epochs\n";
        return kExitDiverged;
    }
    if (test_set.empty()) {
        std::cout << "trained " << cfg.epochs << " epochs (no test set)\n";
    } else {
        std::cout << "mse_norm=" << vand::fmt_double(result.mse_norm)
                  << " mse_raw=" << vand::fmt_double(result.mse_raw) << "\n";
    }
    return kExitOk;
}

int cmd_eval(const std::string& model_path, const std::string& data_path) {
    vand::StackedModel model = vand::load_model(model_path);
    const vand::Dataset data = vand::load_dataset(data_path);
    auto [mse_norm, mse_raw] = vand::evaluate(model, data);
    std::cout << "mse_norm=" << vand::fmt_double(mse_norm)
              << " mse_raw=" << vand::fmt_double(mse_raw) << "\n";
    return kExitOk;
}

int cmd_sweep(const TrainFlags& flags, const std::string& modes_text,
              const std::string& seeds_text, const std::string& out, int workers,
              const std::string& model_dir) {
    vand::TrainConfig cfg = resolve_config(flags);
    const std::vector<vand::VandKind> modes = parse_mode_list(modes_text);
    const std::vector<uint64_t> seeds = parse_seed_list(seeds_text);
    if (modes.empty()) throw vand::ValueError("sweep: empty mode list; valid modes: " +
                                              vand::valid_mode_names());
    if (seeds.empty()) throw vand::ValueError("sweep: empty seed list");
    if (cfg.data_path.empty()) throw vand::ValueError("sweep: no training data given");

    const vand::Dataset train_set = vand::load_dataset(cfg.data_path);
    vand::Dataset test_set;
    if (!cfg.test_path.empty()) test_set = vand::load_dataset(cfg.test_path);

    const auto rows =
        vand::run_matrix(cfg, modes, seeds, train_set, test_set, out, workers, model_dir);

    // per-mode median test MSE, ascending
    struct ModeRow {
        std::string mode;
        double median;
        int diverged;
    };
    std::vector<ModeRow> table;
    for (vand::VandKind mode : modes) {
        std::vector<double> values;
        int diverged = 0;
        for (const auto& r : rows) {
            if (r.mode != vand::to_string(mode)) continue;
            if (r.diverged) ++diverged;
            values.push_back(std::isfinite(r.mse_norm) ? r.mse_norm
                                                       : std::numeric_limits<double>::infinity());
        }
        std::sort(values.begin(), values.end());
        const size_t n = values.size();
        const double median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
        table.push_back({vand::to_string(mode), median, diverged});
    }
    std::stable_sort(table.begin(), table.end(),
                     [](const ModeRow& a, const ModeRow& b) { return a.median < b.median; });
    std::cout << "mode,median_mse_norm,diverged_runs\n";
    for (const ModeRow& row : table) {
        std::cout << row.mode << "," << vand::fmt_double(row.median) << "," << row.diverged
                  << "\n";
    }
    return kExitOk;
}

int cmd_analyze(const std::string& model_path, const std::string& out) {
    const vand::StackedModel model = vand::load_model(model_path);
    vand::analyze_params(model, out);
    std::cout << "wrote per-unit regularizer table to " << out << "\n";
    return kExitOk;
}

int cmd_rollout(const std::string& model_path, const std::string& kind_text,
                const std::string& data_path, int horizon, int prefix, int traj_index,
                const std::string& out) {
    vand::StackedModel model = vand::load_model(model_path);
    const vand::TaskKind kind = vand::task_from_string(kind_text);
    const vand::Dataset data = vand::load_dataset(data_path);
    if (traj_index < 0 || traj_index >= static_cast<int>(data.size())) {
        throw vand::ValueError("rollout: trajectory index out of range");
    }
    const vand::Trajectory& start = data[static_cast<size_t>(traj_index)];
    if (start.x_dim() != model.input_dim) {
        throw vand::ValueError("rollout: data dimension does not match the model");
    }
    vand::ModelPolicy policy(model);
    const vand::RolloutResult result = vand::rollout(policy, kind, horizon, start, prefix);
    write_rollout_csv(result, out);
    std::cout << "rollout: " << result.recorded << " steps"
              << (result.diverged ? " (diverged)" : "") << " -> " << out << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sequence learning with variational adaptive noise and dropout"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic task dataset");
    std::string gen_task = "periodic", gen_out;
    int gen_n = 10, gen_steps = 600;
    int64_t gen_seed = -1, gen_task_seed = -1;
    double gen_noise = -1.0;
    gen->add_option("--task", gen_task, "sequential or periodic");
    gen->add_option("--n", gen_n, "number of trajectories");
    gen->add_option("--steps", gen_steps, "steps per trajectory");
    gen->add_option("--seed", gen_seed, "noise realization seed");
    gen->add_option("--noise", gen_noise, "observation noise std (default per task)");
    gen->add_option("--task-seed", gen_task_seed,
                    "waypoint program seed (sequential; fixed default so that train/test "
                    "files generated with different --seed share the routine)");
    gen->add_option("--out", gen_out, "output trajectory file")->required();

    // shared train/sweep flags
    auto add_train_flags = [](CLI::App* cmd, TrainFlags& f) {
        cmd->add_option("--config", f.config_path, "JSON config file");
        cmd->add_option("--data", f.data, "training trajectory file");
        cmd->add_option("--test", f.test, "test trajectory file");
        cmd->add_option("--mode", f.mode, "regularization condition");
        cmd->add_option("--epochs", f.epochs, "training epochs");
        cmd->add_option("--hidden", f.hidden, "hidden units per layer");
        cmd->add_option("--layers", f.layers, "LSTM layers");
        cmd->add_option("--batch-size", f.batch_size, "trajectories per batch");
        cmd->add_option("--lr", f.lr, "learning rate");
        cmd->add_option("--seed", f.seed, "run seed");
    };

    auto* train_cmd = app.add_subcommand("train", "Train one condition");
    TrainFlags train_flags;
    std::string train_out_model, train_out_metrics;
    add_train_flags(train_cmd, train_flags);
    train_cmd->add_option("--out-model", train_out_model, "model JSON output");
    train_cmd->add_option("--out-metrics", train_out_metrics, "training-curve CSV output");

    auto* eval_cmd = app.add_subcommand("eval", "Teacher-forced MSE of a trained model");
    std::string eval_model, eval_data;
    eval_cmd->add_option("--model", eval_model, "model JSON file")->required();
    eval_cmd->add_option("--data", eval_data, "trajectory file")->required();

    auto* sweep_cmd = app.add_subcommand("sweep", "Train a modes x seeds matrix");
    TrainFlags sweep_flags;
    std::string sweep_modes, sweep_seeds, sweep_out, sweep_model_dir;
    int sweep_workers = 1;
    add_train_flags(sweep_cmd, sweep_flags);
    sweep_cmd->add_option("--modes", sweep_modes, "comma-separated condition names")->required();
    sweep_cmd->add_option("--seeds", sweep_seeds, "seed list, e.g. 0,1,2 or 0..9")->required();
    sweep_cmd->add_option("--out", sweep_out, "results CSV")->required();
    sweep_cmd->add_option("--workers", sweep_workers, "parallel training workers");
    sweep_cmd->add_option("--model-dir", sweep_model_dir, "directory for per-run model files");

    auto* analyze_cmd = app.add_subcommand("analyze", "Export learned sigma/beta per unit");
    std::string analyze_model, analyze_out;
    analyze_cmd->add_option("--model", analyze_model, "model JSON file")->required();
    analyze_cmd->add_option("--out", analyze_out, "analysis CSV")->required();

    auto* rollout_cmd = app.add_subcommand("rollout", "Closed-loop rollout of a trained model");
    std::string rollout_model, rollout_kind, rollout_data, rollout_out;
    int rollout_horizon = 1200, rollout_prefix = 10, rollout_traj = 0;
    rollout_cmd->add_option("--model", rollout_model, "model JSON file")->required();
    rollout_cmd->add_option("--kind", rollout_kind, "sequential or periodic")->required();
    rollout_cmd->add_option("--data", rollout_data, "trajectory file providing the start prefix")
        ->required();
    rollout_cmd->add_option("--horizon", rollout_horizon, "closed-loop steps");
    rollout_cmd->add_option("--prefix", rollout_prefix, "teacher-forced warmup steps");
    rollout_cmd->add_option("--traj", rollout_traj, "start trajectory index");
    rollout_cmd->add_option("--out", rollout_out, "rollout CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) {
            return cmd_gen_data(gen_task, gen_n, gen_steps, gen_seed, gen_noise, gen_task_seed,
                                gen_out);
        }
        if (train_cmd->parsed()) return cmd_train(train_flags, train_out_model, train_out_metrics);
        if (eval_cmd->parsed()) return cmd_eval(eval_model, eval_data);
        if (sweep_cmd->parsed()) {
            return cmd_sweep(sweep_flags, sweep_modes, sweep_seeds, sweep_out, sweep_workers,
                             sweep_model_dir);
        }
        if (analyze_cmd->parsed()) return cmd_analyze(analyze_model, analyze_out);
        if (rollout_cmd->parsed()) {
            return cmd_rollout(rollout_model, rollout_kind, rollout_data, rollout_horizon,
                               rollout_prefix, rollout_traj, rollout_out);
        }
    } catch (const vand::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
