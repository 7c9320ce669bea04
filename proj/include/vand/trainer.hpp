#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "vand/data.hpp"
#include "vand/optim.hpp"
#include "vand/rnn.hpp"

namespace vand {

struct TrainConfig {
    VandModeSpec mode;
    int layers = 2;
    int hidden = 100;
    double lr = 1e-3;
    int batch_size = 50;
    int epochs = 1000;
    int steps_per_epoch = 1; // one sampled batch per epoch by default
    int eval_every = 50;
    uint64_t seed = 0;
    bool noise_in_recurrence = false;
    bool mask_cell_state = false;
    std::string task = "task";   // label used in result rows / file names
    std::string data_path;       // optional: supplied by config files
    std::string test_path;
};

struct EvalPoint {
    int epoch = 0;
    double mse_norm = 0.0;
    double mse_raw = 0.0;
};

struct ConditionResult {
    std::string task;
    std::string mode;
    uint64_t seed = 0;
    double mse_norm = std::numeric_limits<double>::quiet_NaN(); // NaN: diverged or not measured
    double mse_raw = std::numeric_limits<double>::quiet_NaN();
    bool diverged = false;
    double wall_s = 0.0;
    std::vector<double> nll_curve;     // per epoch
    std::vector<EvalPoint> eval_curve; // every eval_every epochs and at the end
};

/// Full-sequence BPTT over one sampled batch per step: loss is the time sum of
/// per-step Gaussian NLLs (batch-averaged), optimized with Adam. A NaN/Inf
/// loss or gradient stops the run and flags divergence instead of raising.
std::pair<StackedModel, ConditionResult> train(const TrainConfig& config, const Dataset& train_set,
                                               const Dataset& test_set);

/// Teacher-forced evaluation in inference mode. Returns (normalized, raw) MSE
/// of the predicted mean over all steps and trajectories.
std::pair<double, double> evaluate(StackedModel& model, const Dataset& test_set);

/// Cross-product of modes x seeds; one result row each. Individual failures
/// are recorded as diverged rows and the matrix continues. Rows are written to
/// `out_csv` (schema: task,mode,seed,mse_norm,mse_raw,diverged,wall_s) in
/// mode-major order regardless of worker scheduling. When `model_dir` is
/// non-empty every run's model is saved as {task}_{mode}_{seed}.model.json.
std::vector<ConditionResult> run_matrix(const TrainConfig& base, const std::vector<VandKind>& modes,
                                        const std::vector<uint64_t>& seeds,
                                        const Dataset& train_set, const Dataset& test_set,
                                        const std::string& out_csv, int workers = 1,
                                        const std::string& model_dir = "");

/// Per-layer transformed (sigma, beta) table with a median/IQR summary row per
/// layer. Throws ValueError for modes without learnable regularizers.
void analyze_params(const StackedModel& model, const std::string& out_csv);

struct LayerStats {
    int layer = 0;
    std::vector<double> sigma, beta;
    double sigma_median = 0.0, sigma_iqr = 0.0;
    double beta_median = 0.0, beta_iqr = 0.0;
};

std::vector<LayerStats> analyze_params(const StackedModel& model);

/// Parse a TrainConfig from JSON text. Recognized keys mirror the struct
/// fields: mode, const_value, layers, hidden, lr, batch_size, epochs,
/// steps_per_epoch, eval_every, seed, noise_in_recurrence, mask_cell_state,
/// task, data, test. Unknown keys are rejected.
TrainConfig train_config_from_json_text(const std::string& text);

/// Shortest decimal form that round-trips a double (17 significant digits).
std::string fmt_double(double v);

/// Write one training-curve CSV: epoch,nll,mse_norm,mse_raw (MSE columns only
/// on evaluation epochs).
void write_metrics_csv(const ConditionResult& result, const std::string& path);

} // namespace vand
