#include "vand/vand.hpp"

#include "vand/error.hpp"

namespace vand {

const char* to_string(VandKind kind) {
    switch (kind) {
        case VandKind::vanilla: return "vanilla";
        case VandKind::const_noise: return "const_noise";
        case VandKind::var_noise: return "var_noise";
        case VandKind::const_dropout: return "const_dropout";
        case VandKind::var_dropout: return "var_dropout";
        case VandKind::vand: return "vand";
    }
    return "?";
}

std::string valid_mode_names() {
    return "vanilla, const_noise, var_noise, const_dropout, var_dropout, vand";
}

VandKind mode_from_string(const std::string& name) {
    if (name == "vanilla") return VandKind::vanilla;
    if (name == "const_noise") return VandKind::const_noise;
    if (name == "var_noise") return VandKind::var_noise;
    if (name == "const_dropout") return VandKind::const_dropout;
    if (name == "var_dropout") return VandKind::var_dropout;
    if (name == "vand") return VandKind::vand;
    throw ValueError("unknown mode '" + name + "'; valid modes: " + valid_mode_names());
}

bool mode_has_noise(VandKind kind) {
    return kind == VandKind::const_noise || kind == VandKind::var_noise || kind == VandKind::vand;
}

bool mode_has_mask(VandKind kind) {
    return kind == VandKind::const_dropout || kind == VandKind::var_dropout || kind == VandKind::vand;
}

bool mode_sigma_learnable(VandKind kind) {
    return kind == VandKind::var_noise || kind == VandKind::vand;
}

bool mode_beta_learnable(VandKind kind) {
    return kind == VandKind::var_dropout || kind == VandKind::vand;
}

VandLayerParams make_vand_params(int hidden, const std::string& prefix) {
    VandLayerParams p;
    p.hidden = hidden;
    p.sigma_real = Parameter{prefix + ".sigma_real", Tensor::zeros({hidden})};
    p.beta_real = Parameter{prefix + ".beta_real", Tensor::zeros({hidden})};
    return p;
}

Value transform_scale(Value sigma_real) {
    // softplus(stopgrad(s)) + (s - stopgrad(s)): the trailing term is exactly
    // zero so the forward value is bit-for-bit softplus(s), while the gradient
    // flows only through the identity branch.
    Value sg = stop_gradient(sigma_real);
    return add(softplus(sg), sub(sigma_real, sg));
}

Value transform_ratio(Value beta_real) {
    Value sg = stop_gradient(beta_real);
    return add(sigmoid(sg), sub(beta_real, sg));
}

Value sample_noise(Value sigma, int rows, RandomStream& rng) {
    const Tensor& s = sigma.val();
    if (s.ndim() != 1) throw ShapeError("sample_noise: sigma must be 1-D, got " + shape_str(s));
    const int h = s.dim(0);
    Tensor zeta({rows, h});
    rng.fill_normal(zeta.data(), zeta.numel());
    Value zc = sigma.tape()->constant(std::move(zeta));
    return mul(tile_rows(sigma, rows), zc);
}

Value sample_mask(Value beta, int rows, RandomStream& rng) {
    const Tensor& b = beta.val();
    if (b.ndim() != 1) throw ShapeError("sample_mask: beta must be 1-D, got " + shape_str(b));
    const int h = b.dim(0);
    Tensor draw({rows, h});
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < h; ++j) {
            draw.at(i, j) = rng.uniform() < b[j] ? 1.0 : 0.0;
        }
    }
    return straight_through(tile_rows(beta, rows), std::move(draw));
}

EffectiveVand effective_params(Tape& tape, const VandLayerParams& params,
                               const VandModeSpec& mode, Phase /*phase*/) {
    // The phase changes how the recurrence consumes these values (sampled in
    // train, means in infer), never the values themselves.
    const int h = params.hidden;
    EffectiveVand eff;
    eff.has_noise = mode_has_noise(mode.kind);
    eff.has_mask = mode_has_mask(mode.kind);
    eff.sigma_learnable = mode_sigma_learnable(mode.kind);
    eff.beta_learnable = mode_beta_learnable(mode.kind);

    if (eff.sigma_learnable) {
        eff.sigma_eff = transform_scale(tape.leaf(params.sigma_real));
    } else if (eff.has_noise) {
        eff.sigma_eff = tape.constant(Tensor::full({h}, mode.const_value));
    } else {
        eff.sigma_eff = tape.constant(Tensor::zeros({h}));
    }

    if (eff.beta_learnable) {
        eff.beta_eff = transform_ratio(tape.leaf(params.beta_real));
    } else if (eff.has_mask) {
        eff.beta_eff = tape.constant(Tensor::full({h}, mode.const_value));
    } else {
        eff.beta_eff = tape.constant(Tensor::zeros({h}));
    }
    return eff;
}

} // namespace vand
