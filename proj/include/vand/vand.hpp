#pragma once

#include <string>

#include "vand/random.hpp"
#include "vand/tape.hpp"

namespace vand {

enum class Phase { train, infer };

/// The six regularization conditions.
enum class VandKind { vanilla, const_noise, var_noise, const_dropout, var_dropout, vand };

struct VandModeSpec {
    VandKind kind = VandKind::vanilla;
    double const_value = 1e-2; // used by the const_* kinds; must be in (0, 1)
};

const char* to_string(VandKind kind);
VandKind mode_from_string(const std::string& name); // throws ValueError listing valid names
std::string valid_mode_names();

bool mode_has_noise(VandKind kind);
bool mode_has_mask(VandKind kind);
bool mode_sigma_learnable(VandKind kind);
bool mode_beta_learnable(VandKind kind);
inline bool mode_is_variable(VandKind kind) {
    return mode_sigma_learnable(kind) || mode_beta_learnable(kind);
}

/// Per-layer unconstrained regularizer parameters. The constrained values are
/// sigma = softplus(sigma_real) and beta = sigmoid(beta_real).
struct VandLayerParams {
    Parameter sigma_real;
    Parameter beta_real;
    int hidden = 0;
};

/// Both initialized to zero: sigma = ln 2, beta = 0.5.
VandLayerParams make_vand_params(int hidden, const std::string& prefix);

/// Noise scale with a straight-through transform: the forward value is
/// softplus(sigma_real) and d(sigma)/d(sigma_real) is exactly 1.
Value transform_scale(Value sigma_real);

/// Dropout ratio, same construction over sigmoid.
Value transform_ratio(Value beta_real);

/// eps = sigma ⊙ zeta with zeta ~ N(0, I) drawn per element; the draw is a
/// tape constant so gradients flow to sigma (reparameterization).
/// sigma: [H] -> result [rows x H], fresh draws per row.
Value sample_noise(Value sigma, int rows, RandomStream& rng);

/// Hard Bernoulli mask in {0,1} with straight-through gradient to beta.
/// beta: [H] -> result [rows x H], fresh draws per row.
Value sample_mask(Value beta, int rows, RandomStream& rng);

/// Per-layer effective regularizers for a condition and phase. Disabled
/// components are exact-zero constants; the has_* flags tell the recurrence
/// whether the sampling path for that component exists at all.
struct EffectiveVand {
    Value sigma_eff; // [H]
    Value beta_eff;  // [H]
    bool sigma_learnable = false;
    bool beta_learnable = false;
    bool has_noise = false;
    bool has_mask = false;
};

EffectiveVand effective_params(Tape& tape, const VandLayerParams& params,
                               const VandModeSpec& mode, Phase phase);

} // namespace vand
