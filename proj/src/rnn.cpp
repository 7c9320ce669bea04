#include "vand/rnn.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "vand/error.hpp"

namespace vand {

namespace {

double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor uniform_init(std::vector<int> shape, double bound, RandomStream& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = (2.0 * rng.uniform() - 1.0) * bound;
    return t;
}

} // namespace

LstmLayerParams make_lstm_params(int input_dim, int hidden, RandomStream& rng,
                                 const std::string& prefix) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    LstmLayerParams p;
    p.input_dim = input_dim;
    p.hidden = hidden;
    p.w_ih = Parameter{prefix + ".w_ih", uniform_init({4 * hidden, input_dim}, bound, rng)};
    p.w_hh = Parameter{prefix + ".w_hh", uniform_init({4 * hidden, hidden}, bound, rng)};
    Tensor b = Tensor::zeros({4 * hidden});
    for (int j = hidden; j < 2 * hidden; ++j) b[j] = 1.0; // forget-gate bias
    p.b = Parameter{prefix + ".b", std::move(b)};
    return p;
}

std::pair<Value, Value> lstm_cell(Value x, Value h_prev, Value c_prev, Value w_ih, Value w_hh,
                                  Value b) {
    Tape& tape = *x.tape();
    const Tensor& xv = x.val();
    const Tensor& hv = h_prev.val();
    const Tensor& cv = c_prev.val();
    const Tensor& wih = w_ih.val();
    const Tensor& whh = w_hh.val();
    const Tensor& bv = b.val();

    const int batch = xv.rows();
    const int h4 = wih.rows();
    const int hid = h4 / 4;
    if (h4 % 4 != 0 || whh.rows() != h4 || whh.cols() != hid || bv.numel() != h4 ||
        wih.cols() != xv.cols() || hv.rows() != batch || hv.cols() != hid ||
        cv.rows() != batch || cv.cols() != hid) {
        throw ShapeError("lstm_cell: inconsistent shapes x=" + shape_str(xv) +
                         " h=" + shape_str(hv) + " c=" + shape_str(cv) +
                         " w_ih=" + shape_str(wih) + " w_hh=" + shape_str(whh) +
                         " b=" + shape_str(bv));
    }

    // pre-activations [B x 4H]
    Tensor pre({batch, h4});
    for (int i = 0; i < batch; ++i)
        for (int j = 0; j < h4; ++j) pre.at(i, j) = bv[j];
    gemm_nt(xv, wih, pre, true);
    gemm_nt(hv, whh, pre, true);

    // gate activations, stored for backward
    Tensor gi({batch, hid}), gf({batch, hid}), gg({batch, hid}), go({batch, hid});
    Tensor combined({batch, 2 * hid}); // [h | c]
    for (int i = 0; i < batch; ++i) {
        const double* prow = pre.data() + static_cast<int64_t>(i) * h4;
        for (int j = 0; j < hid; ++j) {
            const double iv = sigmoid_scalar(prow[j]);
            const double fv = sigmoid_scalar(prow[hid + j]);
            const double gv = std::tanh(prow[2 * hid + j]);
            const double ov = sigmoid_scalar(prow[3 * hid + j]);
            const double cn = fv * cv.at(i, j) + iv * gv;
            gi.at(i, j) = iv;
            gf.at(i, j) = fv;
            gg.at(i, j) = gv;
            go.at(i, j) = ov;
            combined.at(i, j + hid) = cn;
            combined.at(i, j) = ov * std::tanh(cn);
        }
    }

    const bool rg = x.requires_grad() || h_prev.requires_grad() || c_prev.requires_grad() ||
                    w_ih.requires_grad() || w_hh.requires_grad() || b.requires_grad();
    Value node = tape.node(std::move(combined), rg);
    if (rg) {
        const NodeId ix = x.id(), ih = h_prev.id(), ic = c_prev.id();
        const NodeId iwih = w_ih.id(), iwhh = w_hh.id(), ib = b.id();
        const NodeId self = node.id();
        tape.set_backward(
            self, [=, gi = std::move(gi), gf = std::move(gf), gg = std::move(gg),
                   go = std::move(go)](Tape& t, const Tensor& g) {
                const Tensor& comb = t.value(self);
                const Tensor& cv = t.value(ic);
                const int batch = comb.rows();
                const int hid = comb.cols() / 2;
                const int h4 = 4 * hid;

                // gradient w.r.t. gate pre-activations
                Tensor dpre({batch, h4});
                Tensor dcprev({batch, hid});
                for (int i = 0; i < batch; ++i) {
                    double* dp = dpre.data() + static_cast<int64_t>(i) * h4;
                    for (int j = 0; j < hid; ++j) {
                        const double dh = g.at(i, j);
                        const double dc_in = g.at(i, j + hid);
                        const double cn = comb.at(i, j + hid);
                        const double tc = std::tanh(cn);
                        const double iv = gi.at(i, j), fv = gf.at(i, j);
                        const double gv = gg.at(i, j), ov = go.at(i, j);
                        const double dc = dc_in + dh * ov * (1.0 - tc * tc);
                        dp[3 * hid + j] = dh * tc * ov * (1.0 - ov);        // o gate
                        dp[hid + j] = dc * cv.at(i, j) * fv * (1.0 - fv);   // f gate
                        dp[j] = dc * gv * iv * (1.0 - iv);                   // i gate
                        dp[2 * hid + j] = dc * iv * (1.0 - gv * gv);         // g gate
                        dcprev.at(i, j) = dc * fv;
                    }
                }

                if (t.requires_grad(ic)) t.accumulate(ic, std::move(dcprev));
                if (t.requires_grad(ix)) {
                    Tensor dx({batch, t.value(ix).cols()});
                    gemm_nn(dpre, t.value(iwih), dx, false);
                    t.accumulate(ix, std::move(dx));
                }
                if (t.requires_grad(ih)) {
                    Tensor dh({batch, hid});
                    gemm_nn(dpre, t.value(iwhh), dh, false);
                    t.accumulate(ih, std::move(dh));
                }
                if (t.requires_grad(iwih)) {
                    Tensor dw({h4, t.value(ix).cols()});
                    gemm_tn(dpre, t.value(ix), dw, false);
                    t.accumulate(iwih, std::move(dw));
                }
                if (t.requires_grad(iwhh)) {
                    Tensor dw({h4, hid});
                    gemm_tn(dpre, t.value(ih), dw, false);
                    t.accumulate(iwhh, std::move(dw));
                }
                if (t.requires_grad(ib)) {
                    Tensor db({h4});
                    for (int i = 0; i < batch; ++i)
                        for (int j = 0; j < h4; ++j) db[j] += dpre.at(i, j);
                    t.accumulate(ib, std::move(db));
                }
            });
    }
    Value h = slice_cols(node, 0, hid);
    Value c = slice_cols(node, hid, hid);
    return {h, c};
}

StepOut vand_layer_step(Value x, Value h_prev, Value c_prev, Value w_ih, Value w_hh, Value b,
                        const EffectiveVand& eff, Phase phase, RandomStream* rng,
                        const StepOptions& opts) {
    Tape& tape = *x.tape();
    const int batch = x.val().rows();

    Value h_in = h_prev;
    Value c_in = c_prev;
    if (eff.has_mask) {
        if (phase == Phase::train) {
            if (!rng) throw ValueError("vand_layer_step: train phase requires an rng");
            Value m = sample_mask(eff.beta_eff, batch, *rng);
            Value keep = sub(1.0, m);
            h_in = mul(keep, h_prev);
            if (opts.mask_cell_state) c_in = mul(keep, c_prev);
        } else {
            Value keep = sub(1.0, tile_rows(eff.beta_eff, batch));
            h_in = mul(keep, h_prev);
            if (opts.mask_cell_state) c_in = mul(keep, c_prev);
        }
    }

    auto [h, c] = lstm_cell(x, h_in, c_in, w_ih, w_hh, b);

    StepOut out;
    out.h = h;
    out.c = c;
    out.out = h;
    if (eff.has_noise && phase == Phase::train) {
        if (!rng) throw ValueError("vand_layer_step: train phase requires an rng");
        Value eps = sample_noise(eff.sigma_eff, batch, *rng);
        out.out = add(h, eps);
        if (opts.noise_in_recurrence) out.h = out.out;
    }
    return out;
}

std::vector<Parameter*> StackedModel::weight_params() {
    std::vector<Parameter*> out;
    for (auto& layer : lstm) {
        out.push_back(&layer.w_ih);
        out.push_back(&layer.w_hh);
        out.push_back(&layer.b);
    }
    out.push_back(&head.w_mu);
    out.push_back(&head.b_mu);
    out.push_back(&head.w_v);
    out.push_back(&head.b_v);
    return out;
}

std::vector<Parameter*> StackedModel::learnable_params() {
    std::vector<Parameter*> out = weight_params();
    for (auto& v : vnd) {
        if (mode_sigma_learnable(mode.kind)) out.push_back(&v.sigma_real);
        if (mode_beta_learnable(mode.kind)) out.push_back(&v.beta_real);
    }
    return out;
}

StackedModel init_model(int input_dim, int output_dim, int hidden, int num_layers,
                        const VandModeSpec& mode, RandomStream& rng) {
    if (input_dim < 1 || output_dim < 1 || hidden < 1 || num_layers < 1) {
        throw ValueError("init_model: dimensions must be positive");
    }
    StackedModel m;
    m.mode = mode;
    m.input_dim = input_dim;
    m.output_dim = output_dim;
    m.hidden = hidden;
    m.num_layers = num_layers;
    for (int l = 0; l < num_layers; ++l) {
        const int d_in = l == 0 ? input_dim : hidden;
        const std::string prefix = "layer" + std::to_string(l);
        m.lstm.push_back(make_lstm_params(d_in, hidden, rng, prefix));
        m.vnd.push_back(make_vand_params(hidden, prefix));
    }
    m.head = make_head_params(hidden, output_dim, rng, "head");
    m.norm.x_mean = Tensor::zeros({input_dim});
    m.norm.x_std = Tensor::full({input_dim}, 1.0);
    m.norm.y_mean = Tensor::zeros({output_dim});
    m.norm.y_std = Tensor::full({output_dim}, 1.0);
    return m;
}

ForwardResult stacked_forward(Tape& tape, const Tensor& xs, StackedModel& model, Phase phase,
                              RandomStream* rng) {
    if (xs.ndim() != 3) throw ShapeError("stacked_forward: xs must be [T x B x |X|]");
    const int steps = xs.dim(0);
    const int batch = xs.dim(1);
    const int dx = xs.dim(2);
    if (steps < 1) throw ShapeError("stacked_forward: needs at least one step");
    if (dx != model.input_dim) {
        throw ShapeError("stacked_forward: input dim " + std::to_string(dx) +
                         " does not match model dim " + std::to_string(model.input_dim));
    }

    StepOptions opts{model.noise_in_recurrence, model.mask_cell_state};

    // layer inputs for the current layer, one [B x D] node per step
    std::vector<Value> inputs;
    inputs.reserve(static_cast<size_t>(steps));
    for (int t = 0; t < steps; ++t) {
        Tensor xt({batch, dx});
        const double* src = xs.data() + static_cast<int64_t>(t) * batch * dx;
        for (int64_t i = 0; i < static_cast<int64_t>(batch) * dx; ++i) xt[i] = src[i];
        inputs.push_back(tape.constant(std::move(xt)));
    }

    ForwardResult res;
    for (int l = 0; l < model.num_layers; ++l) {
        Value w_ih = tape.leaf(model.lstm[static_cast<size_t>(l)].w_ih);
        Value w_hh = tape.leaf(model.lstm[static_cast<size_t>(l)].w_hh);
        Value b = tape.leaf(model.lstm[static_cast<size_t>(l)].b);
        EffectiveVand eff =
            effective_params(tape, model.vnd[static_cast<size_t>(l)], model.mode, phase);

        Value h = tape.constant(Tensor::zeros({batch, model.hidden}));
        Value c = tape.constant(Tensor::zeros({batch, model.hidden}));
        std::vector<Value> outs;
        outs.reserve(static_cast<size_t>(steps));
        for (int t = 0; t < steps; ++t) {
            StepOut step = vand_layer_step(inputs[static_cast<size_t>(t)], h, c, w_ih, w_hh, b,
                                           eff, phase, rng, opts);
            if (!step.h.val().all_finite() || !step.c.val().all_finite()) {
                throw NonFiniteError("non-finite activation at t=" + std::to_string(t) +
                                         ", layer=" + std::to_string(l),
                                     t, l);
            }
            h = step.h;
            c = step.c;
            outs.push_back(step.out);
        }
        res.h_final.push_back(h);
        res.c_final.push_back(c);
        inputs = std::move(outs);
    }
    res.outs = std::move(inputs);
    return res;
}

// ---------------------------------------------------------------------------
// serialization

namespace {

using nlohmann::json;

json tensor_to_json(const Tensor& t) {
    json j;
    j["shape"] = t.shape();
    std::vector<double> data(t.data(), t.data() + t.numel());
    j["data"] = data;
    return j;
}

Tensor tensor_from_json(const json& j, const std::string& where) {
    if (!j.is_object() || !j.contains("shape") || !j.contains("data")) {
        throw IoError(where + ": expected {shape, data}");
    }
    std::vector<int> shape = j["shape"].get<std::vector<int>>();
    std::vector<double> data = j["data"].get<std::vector<double>>();
    try {
        return Tensor(std::move(shape), std::move(data));
    } catch (const ShapeError& e) {
        throw IoError(where + ": " + e.what());
    }
}

json vector_to_json(const Tensor& t) {
    return json(std::vector<double>(t.data(), t.data() + t.numel()));
}

Tensor vector_from_json(const json& j, const std::string& where) {
    if (!j.is_array()) throw IoError(where + ": expected an array");
    std::vector<double> data = j.get<std::vector<double>>();
    const int n = static_cast<int>(data.size());
    return Tensor({n}, std::move(data));
}

} // namespace

void save_model(const StackedModel& model, const std::string& path) {
    json j;
    j["format_version"] = model.format_version;
    j["mode"] = to_string(model.mode.kind);
    j["const_value"] = model.mode.const_value;
    j["input_dim"] = model.input_dim;
    j["output_dim"] = model.output_dim;
    j["hidden"] = model.hidden;
    j["layers"] = model.num_layers;
    j["noise_in_recurrence"] = model.noise_in_recurrence;
    j["mask_cell_state"] = model.mask_cell_state;
    j["diverged"] = model.diverged;
    j["norm"] = {{"x_mean", vector_to_json(model.norm.x_mean)},
                 {"x_std", vector_to_json(model.norm.x_std)},
                 {"y_mean", vector_to_json(model.norm.y_mean)},
                 {"y_std", vector_to_json(model.norm.y_std)}};
    json layers = json::array();
    for (int l = 0; l < model.num_layers; ++l) {
        const auto& lp = model.lstm[static_cast<size_t>(l)];
        const auto& vp = model.vnd[static_cast<size_t>(l)];
        json lj;
        lj["w_ih"] = tensor_to_json(lp.w_ih.value);
        lj["w_hh"] = tensor_to_json(lp.w_hh.value);
        lj["b"] = vector_to_json(lp.b.value);
        lj["sigma_real"] = vector_to_json(vp.sigma_real.value);
        lj["beta_real"] = vector_to_json(vp.beta_real.value);
        layers.push_back(std::move(lj));
    }
    j["lstm_layers"] = std::move(layers);
    j["head"] = {{"w_mu", tensor_to_json(model.head.w_mu.value)},
                 {"b_mu", vector_to_json(model.head.b_mu.value)},
                 {"w_v", tensor_to_json(model.head.w_v.value)},
                 {"b_v", vector_to_json(model.head.b_v.value)}};

    std::ofstream out(path);
    if (!out) throw IoError("cannot write model file: " + path);
    out << j.dump() << "\n";
}

StackedModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open model file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw IoError(path + ": malformed JSON (" + std::string(e.what()) + ")");
    }
    if (j.value("format_version", 0) != 1) {
        throw IoError(path + ": unsupported format_version");
    }

    StackedModel m;
    m.mode.kind = mode_from_string(j.at("mode").get<std::string>());
    m.mode.const_value = j.value("const_value", 1e-2);
    m.input_dim = j.at("input_dim").get<int>();
    m.output_dim = j.at("output_dim").get<int>();
    m.hidden = j.at("hidden").get<int>();
    m.num_layers = j.at("layers").get<int>();
    m.noise_in_recurrence = j.value("noise_in_recurrence", false);
    m.mask_cell_state = j.value("mask_cell_state", false);
    m.diverged = j.value("diverged", false);
    const json& norm = j.at("norm");
    m.norm.x_mean = vector_from_json(norm.at("x_mean"), path + " x_mean");
    m.norm.x_std = vector_from_json(norm.at("x_std"), path + " x_std");
    m.norm.y_mean = vector_from_json(norm.at("y_mean"), path + " y_mean");
    m.norm.y_std = vector_from_json(norm.at("y_std"), path + " y_std");

    const json& layers = j.at("lstm_layers");
    if (static_cast<int>(layers.size()) != m.num_layers) {
        throw IoError(path + ": layer count mismatch");
    }
    for (int l = 0; l < m.num_layers; ++l) {
        const json& lj = layers[static_cast<size_t>(l)];
        const std::string prefix = "layer" + std::to_string(l);
        LstmLayerParams lp;
        lp.input_dim = l == 0 ? m.input_dim : m.hidden;
        lp.hidden = m.hidden;
        lp.w_ih = Parameter{prefix + ".w_ih", tensor_from_json(lj.at("w_ih"), path)};
        lp.w_hh = Parameter{prefix + ".w_hh", tensor_from_json(lj.at("w_hh"), path)};
        lp.b = Parameter{prefix + ".b", vector_from_json(lj.at("b"), path)};
        VandLayerParams vp;
        vp.hidden = m.hidden;
        vp.sigma_real = Parameter{prefix + ".sigma_real", vector_from_json(lj.at("sigma_real"), path)};
        vp.beta_real = Parameter{prefix + ".beta_real", vector_from_json(lj.at("beta_real"), path)};
        m.lstm.push_back(std::move(lp));
        m.vnd.push_back(std::move(vp));
    }
    const json& head = j.at("head");
    m.head.hidden = m.hidden;
    m.head.output_dim = m.output_dim;
    m.head.w_mu = Parameter{"head.w_mu", tensor_from_json(head.at("w_mu"), path)};
    m.head.b_mu = Parameter{"head.b_mu", vector_from_json(head.at("b_mu"), path)};
    m.head.w_v = Parameter{"head.w_v", tensor_from_json(head.at("w_v"), path)};
    m.head.b_v = Parameter{"head.b_v", vector_from_json(head.at("b_v"), path)};
    return m;
}

// ---------------------------------------------------------------------------

InferenceState::InferenceState(StackedModel& model) : model_(model) { reset(); }

void InferenceState::reset() {
    h_.assign(static_cast<size_t>(model_.num_layers), Tensor::zeros({1, model_.hidden}));
    c_.assign(static_cast<size_t>(model_.num_layers), Tensor::zeros({1, model_.hidden}));
}

Tensor InferenceState::step_raw(const Tensor& x_raw) {
    if (x_raw.numel() != model_.input_dim) {
        throw ShapeError("InferenceState: observation size " + std::to_string(x_raw.numel()) +
                         " does not match model input dim " + std::to_string(model_.input_dim));
    }
    Tape tape;
    Tensor xn({1, model_.input_dim});
    for (int j = 0; j < model_.input_dim; ++j) {
        xn.at(0, j) = (x_raw[j] - model_.norm.x_mean[j]) / model_.norm.x_std[j];
    }
    Value x = tape.constant(std::move(xn));
    for (int l = 0; l < model_.num_layers; ++l) {
        Value w_ih = tape.leaf(model_.lstm[static_cast<size_t>(l)].w_ih);
        Value w_hh = tape.leaf(model_.lstm[static_cast<size_t>(l)].w_hh);
        Value b = tape.leaf(model_.lstm[static_cast<size_t>(l)].b);
        EffectiveVand eff =
            effective_params(tape, model_.vnd[static_cast<size_t>(l)], model_.mode, Phase::infer);
        Value h_prev = tape.constant(h_[static_cast<size_t>(l)]);
        Value c_prev = tape.constant(c_[static_cast<size_t>(l)]);
        StepOptions opts{model_.noise_in_recurrence, model_.mask_cell_state};
        StepOut step =
            vand_layer_step(x, h_prev, c_prev, w_ih, w_hh, b, eff, Phase::infer, nullptr, opts);
        h_[static_cast<size_t>(l)] = step.h.val();
        c_[static_cast<size_t>(l)] = step.c.val();
        x = step.out;
    }
    auto [mu, var] = head_forward(tape, x, model_.head);
    Tensor pred({model_.output_dim});
    for (int j = 0; j < model_.output_dim; ++j) {
        pred[j] = mu.val().at(0, j) * model_.norm.y_std[j] + model_.norm.y_mean[j];
    }
    return pred;
}

} // namespace vand
