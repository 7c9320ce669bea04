#include "vand/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <thread>

#include <json.hpp>

#include "vand/error.hpp"
#include "vand/head.hpp"

namespace vand {

namespace {

double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

std::pair<double, double> evaluate_or_nan(StackedModel& model, const Dataset& test_set) {
    try {
        return evaluate(model, test_set);
    } catch (const Error&) {
        return {nan_value(), nan_value()};
    }
}

} // namespace

std::string fmt_double(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::pair<StackedModel, ConditionResult> train(const TrainConfig& config, const Dataset& train_set,
                                               const Dataset& test_set) {
    if (config.epochs < 1 || config.batch_size < 1 || config.hidden < 1 || config.layers < 1) {
        throw ValueError("train: epochs, batch_size, hidden and layers must be >= 1");
    }
    if (train_set.empty()) throw ValueError("train: empty training set");
    const int dx = train_set.front().x_dim();
    const int dy = train_set.front().y_dim();
    if (!test_set.empty() &&
        (test_set.front().x_dim() != dx || test_set.front().y_dim() != dy)) {
        throw ValueError("train: train and test dimensions disagree");
    }

    const auto start_time = std::chrono::steady_clock::now();

    RandomStream rng(config.seed);
    StackedModel model = init_model(dx, dy, config.hidden, config.layers, config.mode, rng);
    model.noise_in_recurrence = config.noise_in_recurrence;
    model.mask_cell_state = config.mask_cell_state;
    model.norm = fit_norm(train_set);

    const Dataset train_norm = normalize_dataset(train_set, model.norm);

    AdamConfig adam_cfg;
    adam_cfg.lr = config.lr;
    Adam adam(model.learnable_params(), adam_cfg);

    ConditionResult result;
    result.task = config.task;
    result.mode = to_string(config.mode.kind);
    result.seed = config.seed;
    result.nll_curve.reserve(static_cast<size_t>(config.epochs));

    for (int epoch = 1; epoch <= config.epochs && !model.diverged; ++epoch) {
        double epoch_nll = 0.0;
        for (int step = 0; step < config.steps_per_epoch; ++step) {
            Batch batch = make_batch(train_norm, config.batch_size, rng);
            try {
                Tape tape;
                ForwardResult fwd = stacked_forward(tape, batch.x, model, Phase::train, &rng);
                Value loss;
                for (int t = 0; t < batch.steps; ++t) {
                    Tensor yt({batch.batch, dy});
                    const double* src =
                        batch.y.data() + static_cast<int64_t>(t) * batch.batch * dy;
                    for (int64_t i = 0; i < yt.numel(); ++i) yt[i] = src[i];
                    Value y = tape.constant(std::move(yt));
                    auto [mu, var] =
                        head_forward(tape, fwd.outs[static_cast<size_t>(t)], model.head);
                    Value nll = gaussian_nll(mu, var, y);
                    loss = loss.valid() ? add(loss, nll) : nll;
                }
                const double loss_value = loss.val().item();
                if (!std::isfinite(loss_value)) {
                    throw NonFiniteError("non-finite loss");
                }
                epoch_nll = loss_value;
                auto grads = tape.backward(loss);
                adam.step(tape.param_grads(grads));
            } catch (const NonFiniteError&) {
                model.diverged = true;
                break;
            }
        }
        if (model.diverged) break;
        result.nll_curve.push_back(epoch_nll);
        if (config.eval_every > 0 && epoch % config.eval_every == 0 && epoch != config.epochs &&
            !test_set.empty()) {
            auto [mn, mr] = evaluate_or_nan(model, test_set);
            result.eval_curve.push_back({epoch, mn, mr});
        }
    }

    if (!model.diverged && !test_set.empty()) {
        auto [mn, mr] = evaluate_or_nan(model, test_set);
        result.mse_norm = mn;
        result.mse_raw = mr;
        result.eval_curve.push_back({config.epochs, mn, mr});
        if (!std::isfinite(mn)) model.diverged = true;
    }
    if (model.diverged) {
        result.mse_norm = nan_value();
        result.mse_raw = nan_value();
        result.diverged = true;
    }

    result.wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    return {std::move(model), std::move(result)};
}

std::pair<double, double> evaluate(StackedModel& model, const Dataset& test_set) {
    if (test_set.empty()) throw ValueError("evaluate: empty test set");
    if (test_set.front().x_dim() != model.input_dim ||
        test_set.front().y_dim() != model.output_dim) {
        throw ValueError("evaluate: data dimensions do not match the model");
    }
    const int dy = model.output_dim;
    double acc_norm = 0.0, acc_raw = 0.0;
    int64_t count = 0;
    for (const Trajectory& traj : test_set) {
        const Trajectory norm = normalize_trajectory(traj, model.norm);
        const int steps = norm.steps();
        Tensor xs({steps, 1, norm.x_dim()});
        for (int64_t i = 0; i < xs.numel(); ++i) xs[i] = norm.x[i];

        Tape tape;
        ForwardResult fwd = stacked_forward(tape, xs, model, Phase::infer, nullptr);
        for (int t = 0; t < steps; ++t) {
            auto [mu, var] = head_forward(tape, fwd.outs[static_cast<size_t>(t)], model.head);
            for (int j = 0; j < dy; ++j) {
                const double err = mu.val().at(0, j) - norm.y.at(t, j);
                acc_norm += err * err;
                const double raw_err = err * model.norm.y_std[j];
                acc_raw += raw_err * raw_err;
                ++count;
            }
        }
    }
    return {acc_norm / static_cast<double>(count), acc_raw / static_cast<double>(count)};
}

namespace {

void write_results_csv(const std::string& path, const std::vector<ConditionResult>& rows) {
    if (path.empty()) return;
    std::ofstream out(path);
    if (!out) throw IoError("cannot write results file: " + path);
    out << "task,mode,seed,mse_norm,mse_raw,diverged,wall_s\n";
    for (const ConditionResult& r : rows) {
        out << r.task << "," << r.mode << "," << r.seed << ",";
        if (std::isfinite(r.mse_norm)) out << fmt_double(r.mse_norm);
        out << ",";
        if (std::isfinite(r.mse_raw)) out << fmt_double(r.mse_raw);
        out << "," << (r.diverged ? "true" : "false") << ",";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", r.wall_s);
        out << buf << "\n";
    }
}

} // namespace

std::vector<ConditionResult> run_matrix(const TrainConfig& base, const std::vector<VandKind>& modes,
                                        const std::vector<uint64_t>& seeds,
                                        const Dataset& train_set, const Dataset& test_set,
                                        const std::string& out_csv, int workers,
                                        const std::string& model_dir) {
    if (modes.empty() || seeds.empty()) throw ValueError("run_matrix: empty modes or seeds");
    if (workers < 1) workers = 1;

    struct Job {
        TrainConfig config;
        ConditionResult result;
        bool done = false;
    };
    std::vector<Job> jobs;
    for (VandKind mode : modes) {
        for (uint64_t seed : seeds) {
            Job job;
            job.config = base;
            job.config.mode.kind = mode;
            job.config.seed = seed;
            jobs.push_back(std::move(job));
        }
    }

    auto run_one = [&](Job& job) {
        try {
            auto [model, result] = train(job.config, train_set, test_set);
            if (!model_dir.empty()) {
                const std::string path = model_dir + "/" + job.config.task + "_" +
                                         to_string(job.config.mode.kind) + "_" +
                                         std::to_string(job.config.seed) + ".model.json";
                save_model(model, path);
            }
            job.result = std::move(result);
        } catch (const std::exception&) {
            job.result.task = job.config.task;
            job.result.mode = to_string(job.config.mode.kind);
            job.result.seed = job.config.seed;
            job.result.mse_norm = nan_value();
            job.result.mse_raw = nan_value();
            job.result.diverged = true;
        }
        job.done = true;
    };

    if (workers == 1) {
        for (Job& job : jobs) run_one(job);
    } else {
        std::vector<std::thread> pool;
        std::atomic<size_t> next{0};
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                while (true) {
                    const size_t i = next.fetch_add(1);
                    if (i >= jobs.size()) return;
                    run_one(jobs[i]);
                }
            });
        }
        for (auto& th : pool) th.join();
    }

    std::vector<ConditionResult> rows;
    rows.reserve(jobs.size());
    for (Job& job : jobs) rows.push_back(std::move(job.result));
    write_results_csv(out_csv, rows);
    return rows;
}

std::vector<LayerStats> analyze_params(const StackedModel& model) {
    if (!mode_is_variable(model.mode.kind)) {
        throw ValueError("analyze_params: mode '" + std::string(to_string(model.mode.kind)) +
                         "' has no learnable regularizers");
    }
    auto median_of = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const size_t n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    auto quantile = [](std::vector<double> v, double q) {
        std::sort(v.begin(), v.end());
        const double pos = q * static_cast<double>(v.size() - 1);
        const size_t lo = static_cast<size_t>(pos);
        const size_t hi = std::min(lo + 1, v.size() - 1);
        const double frac = pos - static_cast<double>(lo);
        return v[lo] * (1.0 - frac) + v[hi] * frac;
    };

    std::vector<LayerStats> out;
    for (int l = 0; l < model.num_layers; ++l) {
        const VandLayerParams& vp = model.vnd[static_cast<size_t>(l)];
        LayerStats stats;
        stats.layer = l;
        for (int j = 0; j < model.hidden; ++j) {
            const double sr = vp.sigma_real.value[j];
            const double br = vp.beta_real.value[j];
            const double sigma = (sr > 0.0 ? sr : 0.0) + std::log1p(std::exp(-std::fabs(sr)));
            const double beta = br >= 0.0 ? 1.0 / (1.0 + std::exp(-br))
                                          : std::exp(br) / (1.0 + std::exp(br));
            stats.sigma.push_back(sigma);
            stats.beta.push_back(beta);
        }
        stats.sigma_median = median_of(stats.sigma);
        stats.beta_median = median_of(stats.beta);
        stats.sigma_iqr = quantile(stats.sigma, 0.75) - quantile(stats.sigma, 0.25);
        stats.beta_iqr = quantile(stats.beta, 0.75) - quantile(stats.beta, 0.25);
        out.push_back(std::move(stats));
    }
    return out;
}

void analyze_params(const StackedModel& model, const std::string& out_csv) {
    const std::vector<LayerStats> layers = analyze_params(model);
    std::ofstream out(out_csv);
    if (!out) throw IoError("cannot write analysis file: " + out_csv);
    out << "layer,unit,sigma,beta,sigma_iqr,beta_iqr\n";
    for (const LayerStats& s : layers) {
        for (size_t j = 0; j < s.sigma.size(); ++j) {
            out << s.layer << "," << j << "," << fmt_double(s.sigma[j]) << ","
                << fmt_double(s.beta[j]) << ",,\n";
        }
    }
    for (const LayerStats& s : layers) {
        out << s.layer << ",median," << fmt_double(s.sigma_median) << ","
            << fmt_double(s.beta_median) << "," << fmt_double(s.sigma_iqr) << ","
            << fmt_double(s.beta_iqr) << "\n";
    }
}

TrainConfig train_config_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValueError("config: malformed JSON (" + std::string(e.what()) + ")");
    }
    if (!j.is_object()) throw ValueError("config: expected a JSON object");

    TrainConfig cfg;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "mode") {
                cfg.mode.kind = mode_from_string(value.get<std::string>());
            } else if (key == "const_value") {
                cfg.mode.const_value = value.get<double>();
            } else if (key == "layers") {
                cfg.layers = value.get<int>();
            } else if (key == "hidden") {
                cfg.hidden = value.get<int>();
            } else if (key == "lr") {
                cfg.lr = value.get<double>();
            } else if (key == "batch_size") {
                cfg.batch_size = value.get<int>();
            } else if (key == "epochs") {
                cfg.epochs = value.get<int>();
            } else if (key == "steps_per_epoch") {
                cfg.steps_per_epoch = value.get<int>();
            } else if (key == "eval_every") {
                cfg.eval_every = value.get<int>();
            } else if (key == "seed") {
                cfg.seed = value.get<uint64_t>();
            } else if (key == "noise_in_recurrence") {
                cfg.noise_in_recurrence = value.get<bool>();
            } else if (key == "mask_cell_state") {
                cfg.mask_cell_state = value.get<bool>();
            } else if (key == "task") {
                cfg.task = value.get<std::string>();
            } else if (key == "data") {
                cfg.data_path = value.get<std::string>();
            } else if (key == "test") {
                cfg.test_path = value.get<std::string>();
            } else {
                throw ValueError("config: unknown key '" + key + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw ValueError("config: bad value for '" + key + "' (" + e.what() + ")");
        }
    }
    if (cfg.mode.const_value <= 0.0 || cfg.mode.const_value >= 1.0) {
        throw ValueError("config: const_value must be in (0, 1)");
    }
    return cfg;
}

void write_metrics_csv(const ConditionResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write metrics file: " + path);
    out << "epoch,nll,mse_norm,mse_raw\n";
    size_t next_eval = 0;
    for (size_t e = 0; e < result.nll_curve.size(); ++e) {
        const int epoch = static_cast<int>(e) + 1;
        out << epoch << "," << fmt_double(result.nll_curve[e]);
        if (next_eval < result.eval_curve.size() &&
            result.eval_curve[next_eval].epoch == epoch) {
            out << "," << fmt_double(result.eval_curve[next_eval].mse_norm) << ","
                << fmt_double(result.eval_curve[next_eval].mse_raw);
            ++next_eval;
        } else {
            out << ",,";
        }
        out << "\n";
    }
}

} // namespace vand
