#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vand/data.hpp"
#include "vand/head.hpp"
#include "vand/random.hpp"
#include "vand/tape.hpp"
#include "vand/vand.hpp"

namespace vand {

/// One LSTM layer; gate order i, f, g, o along the 4H axis.
struct LstmLayerParams {
    Parameter w_ih; // [4H x D_in]
    Parameter w_hh; // [4H x H]
    Parameter b;    // [4H]
    int input_dim = 0;
    int hidden = 0;
};

/// Weights ~ U(-1/sqrt(H), 1/sqrt(H)); bias zero except forget gate at +1.
LstmLayerParams make_lstm_params(int input_dim, int hidden, RandomStream& rng,
                                 const std::string& prefix);

/// Standard LSTM cell as one fused tape node (analytic backward).
/// x: [B x D_in], h_prev/c_prev: [B x H]. Returns (h, c).
std::pair<Value, Value> lstm_cell(Value x, Value h_prev, Value c_prev, Value w_ih, Value w_hh,
                                  Value b);

struct StepOptions {
    bool noise_in_recurrence = false; // when true the noisy output also recurs
    bool mask_cell_state = false;     // when true the mask is applied to c as well
};

struct StepOut {
    Value out; // forwarded output (h + eps in train phase)
    Value h;   // clean hidden state
    Value c;   // cell state
};

/// One time step of a VAND-regularized layer.
/// Train: h_prev masked by a fresh Bernoulli draw, output perturbed by fresh
/// Gaussian noise. Infer: deterministic means, h_prev scaled by (1 - beta),
/// no noise. The cell state is neither masked nor noised unless the switches
/// in StepOptions say otherwise.
StepOut vand_layer_step(Value x, Value h_prev, Value c_prev, Value w_ih, Value w_hh, Value b,
                        const EffectiveVand& eff, Phase phase, RandomStream* rng,
                        const StepOptions& opts = {});

/// Full stacked model: LSTM layers with per-layer VAND parameters, Gaussian
/// head, and the normalization statistics it was trained with.
struct StackedModel {
    int format_version = 1;
    VandModeSpec mode;
    int input_dim = 0;
    int output_dim = 0;
    int hidden = 0;
    int num_layers = 0;
    bool noise_in_recurrence = false;
    bool mask_cell_state = false;
    bool diverged = false;
    std::vector<LstmLayerParams> lstm;
    std::vector<VandLayerParams> vnd;
    GaussianHeadParams head;
    NormStats norm;

    std::vector<Parameter*> weight_params();
    std::vector<Parameter*> learnable_params(); // weights + regularizers per mode
};

StackedModel init_model(int input_dim, int output_dim, int hidden, int num_layers,
                        const VandModeSpec& mode, RandomStream& rng);

struct ForwardResult {
    std::vector<Value> outs; // per time step, top layer output [B x H]
    std::vector<Value> h_final, c_final;
};

/// Unrolls the recurrence layer-major (each layer over all time steps before
/// the next) from zero initial state. xs: [T x B x |X|]. Train phase draws
/// fresh mask/noise per layer, step and batch row from `rng`; infer consumes
/// no randomness. Throws NonFiniteError naming (t, layer) on divergence.
ForwardResult stacked_forward(Tape& tape, const Tensor& xs, StackedModel& model, Phase phase,
                              RandomStream* rng);

/// Versioned JSON model file (format_version 1).
void save_model(const StackedModel& model, const std::string& path);
StackedModel load_model(const std::string& path);

/// Stepwise inference-mode execution with persistent hidden state; used for
/// evaluation-style streaming and closed-loop rollouts. Consumes raw
/// (unnormalized) observations and emits raw mean predictions.
class InferenceState {
public:
    explicit InferenceState(StackedModel& model);
    void reset();
    Tensor step_raw(const Tensor& x_raw); // [|X|] -> [|Y|]

private:
    StackedModel& model_;
    std::vector<Tensor> h_, c_; // per layer [1 x H]
};

} // namespace vand
