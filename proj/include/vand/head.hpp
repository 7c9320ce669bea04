#pragma once

#include <utility>

#include "vand/random.hpp"
#include "vand/tape.hpp"

namespace vand {

/// Gaussian output head: mean and variance of the predicted action.
struct GaussianHeadParams {
    Parameter w_mu; // [|Y| x H]
    Parameter b_mu; // [|Y|]
    Parameter w_v;  // [|Y| x H]
    Parameter b_v;  // [|Y|]
    int hidden = 0;
    int output_dim = 0;
};

GaussianHeadParams make_head_params(int hidden, int output_dim, RandomStream& rng,
                                    const std::string& prefix);

/// mu = h·W_muᵀ + b_mu; var = softplus(h·W_vᵀ + b_v) + 1e-6.
std::pair<Value, Value> head_forward(Tape& tape, Value h, const GaussianHeadParams& p);

/// Mean over batch rows of the per-row NLL summed over output dims:
/// 0.5·[ln(2π·var) + (y - mu)² / var]. The time sum is the caller's.
Value gaussian_nll(Value mu, Value var, Value y);

/// Mean squared error over all elements; shapes must match exactly.
double mse(const Tensor& pred, const Tensor& target);

} // namespace vand
