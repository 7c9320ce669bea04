#pragma once

// Test oracle: a reference forward pass for StackedModel composed purely of
// tape primitives, with the straight-through rules substituted analytically.
// Stop-gradients, the fused LSTM node and the hard mask sampling are replaced
// by their linearizations around a frozen evaluation point, so that central
// finite differences of this twin equal the straight-through gradients the
// real implementation is supposed to produce. Draws are reconstructed from the
// documented consumption order (layer-major, then time; mask uniforms before
// noise normals within a step).

#include <cmath>
#include <unordered_map>
#include <vector>

#include "vand/head.hpp"
#include "vand/rnn.hpp"

namespace twin {

using namespace vand;

struct LayerFreeze {
    Tensor sigma_real0, beta_real0; // raw params at the freeze point [H]
    Tensor sigma0, beta0;           // transformed values [H]
    std::vector<Tensor> mask_draw;  // per t, [B x H] in {0,1}
    std::vector<Tensor> noise_draw; // per t, [B x H] standard normals
};

struct FrozenDraws {
    std::vector<LayerFreeze> layers;
    int steps = 0;
    int batch = 0;
};

inline double softplus_s(double x) {
    return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x)));
}
inline double sigmoid_s(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Replays the rng exactly as stacked_forward consumes it in train phase.
inline FrozenDraws reconstruct_draws(const StackedModel& model, int steps, int batch,
                                     uint64_t seed) {
    FrozenDraws out;
    out.steps = steps;
    out.batch = batch;
    RandomStream rng(seed);
    const int h = model.hidden;
    for (int l = 0; l < model.num_layers; ++l) {
        LayerFreeze freeze;
        freeze.sigma_real0 = model.vnd[static_cast<size_t>(l)].sigma_real.value;
        freeze.beta_real0 = model.vnd[static_cast<size_t>(l)].beta_real.value;
        freeze.sigma0 = Tensor({h});
        freeze.beta0 = Tensor({h});
        const bool var_sigma = mode_sigma_learnable(model.mode.kind);
        const bool var_beta = mode_beta_learnable(model.mode.kind);
        for (int j = 0; j < h; ++j) {
            freeze.sigma0[j] = var_sigma ? softplus_s(freeze.sigma_real0[j])
                                         : (mode_has_noise(model.mode.kind) ? model.mode.const_value
                                                                            : 0.0);
            freeze.beta0[j] = var_beta ? sigmoid_s(freeze.beta_real0[j])
                                       : (mode_has_mask(model.mode.kind) ? model.mode.const_value
                                                                         : 0.0);
        }
        for (int t = 0; t < steps; ++t) {
            if (mode_has_mask(model.mode.kind)) {
                Tensor draw({batch, h});
                for (int i = 0; i < batch; ++i)
                    for (int j = 0; j < h; ++j)
                        draw.at(i, j) = rng.uniform() < freeze.beta0[j] ? 1.0 : 0.0;
                freeze.mask_draw.push_back(std::move(draw));
            }
            if (mode_has_noise(model.mode.kind)) {
                Tensor zeta({batch, h});
                rng.fill_normal(zeta.data(), zeta.numel());
                freeze.noise_draw.push_back(std::move(zeta));
            }
        }
        out.layers.push_back(std::move(freeze));
    }
    return out;
}

/// Primitive-composed LSTM cell (no fused node).
inline std::pair<Value, Value> cell_by_primitives(Tape& tape, Value x, Value h_prev, Value c_prev,
                                                  Value w_ih, Value w_hh, Value b, int hidden) {
    const int rows = x.val().rows();
    Value pre = add(add(matmul(x, transpose(w_ih)), matmul(h_prev, transpose(w_hh))),
                    tile_rows(b, rows));
    Value gi = sigmoid(slice_cols(pre, 0, hidden));
    Value gf = sigmoid(slice_cols(pre, hidden, hidden));
    Value gg = vand::tanh(slice_cols(pre, 2 * hidden, hidden));
    Value go = sigmoid(slice_cols(pre, 3 * hidden, hidden));
    Value c = add(mul(gf, c_prev), mul(gi, gg));
    Value h = mul(go, vand::tanh(c));
    return {h, c};
}

/// The whole training loss (sum over t of the batch-mean Gaussian NLL) as a
/// stop-gradient-free function of the model parameters.
inline Value loss_by_primitives(Tape& tape, const Tensor& xs, const Tensor& ys,
                                StackedModel& model, const FrozenDraws& draws) {
    const int steps = xs.dim(0);
    const int batch = xs.dim(1);
    const int dx = xs.dim(2);
    const int dy = ys.dim(2);
    const int h = model.hidden;

    std::vector<Value> inputs;
    for (int t = 0; t < steps; ++t) {
        Tensor xt({batch, dx});
        const double* src = xs.data() + static_cast<int64_t>(t) * batch * dx;
        for (int64_t i = 0; i < static_cast<int64_t>(batch) * dx; ++i) xt[i] = src[i];
        inputs.push_back(tape.constant(std::move(xt)));
    }

    for (int l = 0; l < model.num_layers; ++l) {
        const LayerFreeze& freeze = draws.layers[static_cast<size_t>(l)];
        Value w_ih = tape.leaf(model.lstm[static_cast<size_t>(l)].w_ih);
        Value w_hh = tape.leaf(model.lstm[static_cast<size_t>(l)].w_hh);
        Value b = tape.leaf(model.lstm[static_cast<size_t>(l)].b);

        // straight-through linearizations around the freeze point
        Value sigma_sur, beta_sur;
        if (mode_sigma_learnable(model.mode.kind)) {
            Value s = tape.leaf(model.vnd[static_cast<size_t>(l)].sigma_real);
            sigma_sur = add(tape.constant(freeze.sigma0), sub(s, tape.constant(freeze.sigma_real0)));
        } else {
            sigma_sur = tape.constant(freeze.sigma0);
        }
        if (mode_beta_learnable(model.mode.kind)) {
            Value bt = tape.leaf(model.vnd[static_cast<size_t>(l)].beta_real);
            beta_sur = add(tape.constant(freeze.beta0), sub(bt, tape.constant(freeze.beta_real0)));
        } else {
            beta_sur = tape.constant(freeze.beta0);
        }

        Value h_state = tape.constant(Tensor::zeros({batch, h}));
        Value c_state = tape.constant(Tensor::zeros({batch, h}));
        std::vector<Value> outs;
        for (int t = 0; t < steps; ++t) {
            Value h_in = h_state;
            if (mode_has_mask(model.mode.kind)) {
                // m = tile(beta_sur) + (draw - tile(beta0)): value == draw at
                // the freeze point, derivative 1 w.r.t. beta
                const Tensor& draw = freeze.mask_draw[static_cast<size_t>(t)];
                Tensor offset = draw;
                for (int i = 0; i < batch; ++i)
                    for (int j = 0; j < h; ++j) offset.at(i, j) -= freeze.beta0[j];
                Value m = add(tile_rows(beta_sur, batch), tape.constant(std::move(offset)));
                h_in = mul(sub(1.0, m), h_state);
            }
            auto [hn, cn] = cell_by_primitives(tape, inputs[static_cast<size_t>(t)], h_in,
                                               c_state, w_ih, w_hh, b, h);
            h_state = hn;
            c_state = cn;
            Value out = hn;
            if (mode_has_noise(model.mode.kind)) {
                Value zeta = tape.constant(freeze.noise_draw[static_cast<size_t>(t)]);
                out = add(hn, mul(tile_rows(sigma_sur, batch), zeta));
            }
            outs.push_back(out);
        }
        inputs = std::move(outs);
    }

    Value loss;
    for (int t = 0; t < steps; ++t) {
        Tensor yt({batch, dy});
        const double* src = ys.data() + static_cast<int64_t>(t) * batch * dy;
        for (int64_t i = 0; i < static_cast<int64_t>(batch) * dy; ++i) yt[i] = src[i];
        Value y = tape.constant(std::move(yt));
        auto [mu, var] = head_forward(tape, inputs[static_cast<size_t>(t)], model.head);
        Value nll = gaussian_nll(mu, var, y);
        loss = loss.valid() ? add(loss, nll) : nll;
    }
    return loss;
}

/// The production-path loss and parameter gradients for the same batch/seed.
inline std::pair<double, std::unordered_map<const Parameter*, Tensor>>
real_loss_and_grads(StackedModel& model, const Tensor& xs, const Tensor& ys, uint64_t seed) {
    Tape tape;
    RandomStream rng(seed);
    ForwardResult fwd = stacked_forward(tape, xs, model, Phase::train, &rng);
    const int steps = ys.dim(0);
    const int batch = ys.dim(1);
    const int dy = ys.dim(2);
    Value loss;
    for (int t = 0; t < steps; ++t) {
        Tensor yt({batch, dy});
        const double* src = ys.data() + static_cast<int64_t>(t) * batch * dy;
        for (int64_t i = 0; i < static_cast<int64_t>(batch) * dy; ++i) yt[i] = src[i];
        Value y = tape.constant(std::move(yt));
        auto [mu, var] = head_forward(tape, fwd.outs[static_cast<size_t>(t)], model.head);
        Value nll = gaussian_nll(mu, var, y);
        loss = loss.valid() ? add(loss, nll) : nll;
    }
    const double loss_value = loss.val().item();
    auto grads = tape.backward(loss);
    return {loss_value, tape.param_grads(grads)};
}

/// Max scaled error between the implementation's gradients and central finite
/// differences of the twin. Coordinates far below the dominant gradient scale
/// are held to a proportional absolute tolerance instead of a relative one.
inline double fd_check_model(StackedModel& model, const Tensor& xs, const Tensor& ys,
                             const FrozenDraws& draws,
                             const std::unordered_map<const Parameter*, Tensor>& autodiff,
                             double step) {
    auto eval = [&]() {
        Tape tape;
        return loss_by_primitives(tape, xs, ys, model, draws).val().item();
    };

    double grad_scale = 0.0;
    for (const auto& [param, g] : autodiff) {
        (void)param;
        for (int64_t i = 0; i < g.numel(); ++i) grad_scale = std::max(grad_scale, std::fabs(g[i]));
    }
    const double floor = std::max(1e-4 * grad_scale, 1e-12);

    double max_err = 0.0;
    for (Parameter* param : model.learnable_params()) {
        const Tensor& g = autodiff.at(param);
        for (int64_t i = 0; i < param->value.numel(); ++i) {
            const double orig = param->value[i];
            param->value[i] = orig + step;
            const double fp = eval();
            param->value[i] = orig - step;
            const double fm = eval();
            param->value[i] = orig;
            const double fd = (fp - fm) / (2.0 * step);
            const double denom = std::max({std::fabs(fd), std::fabs(g[i]), floor});
            max_err = std::max(max_err, std::fabs(g[i] - fd) / denom);
        }
    }
    return max_err;
}

} // namespace twin
