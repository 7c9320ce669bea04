#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "vand/tape.hpp"

namespace vand {

/// Gradient-descent update rule over a fixed set of parameters. One instance
/// owns the state of one training run; other optimizers (the paper-adjacent
/// noise-robust ones, say) can slot in behind this interface.
class Optimizer {
public:
    virtual ~Optimizer() = default;

    /// Applies one update. Parameters without an entry in `grads` are left
    /// untouched. Throws NonFiniteError naming the parameter on a NaN/Inf
    /// gradient.
    virtual void step(const std::unordered_map<const Parameter*, Tensor>& grads) = 0;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam. First/second moments start at zero, the step counter at 0; the usual
/// bias correction is applied each step.
class Adam : public Optimizer {
public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg = {});

    void step(const std::unordered_map<const Parameter*, Tensor>& grads) override;

    int64_t steps_taken() const { return t_; }
    const AdamConfig& config() const { return cfg_; }
    const Tensor& first_moment(const Parameter& p) const;
    const Tensor& second_moment(const Parameter& p) const;

private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_, v_;
    AdamConfig cfg_;
    int64_t t_ = 0;
};

} // namespace vand
