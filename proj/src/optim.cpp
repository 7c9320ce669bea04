#include "vand/optim.hpp"

#include <cmath>

#include "vand/error.hpp"

namespace vand {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    if (cfg_.lr <= 0.0) throw ValueError("Adam: learning rate must be positive");
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Parameter* p : params_) {
        m_.push_back(Tensor::zeros(p->value.shape()));
        v_.push_back(Tensor::zeros(p->value.shape()));
    }
}

void Adam::step(const std::unordered_map<const Parameter*, Tensor>& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Parameter* p = params_[i];
        auto it = grads.find(p);
        if (it == grads.end()) continue;
        const Tensor& g = it->second;
        if (!g.same_shape(p->value)) {
            throw ShapeError("Adam: gradient shape " + shape_str(g) + " does not match " +
                             p->name + " " + shape_str(p->value));
        }
        if (!g.all_finite()) {
            throw NonFiniteError("Adam: non-finite gradient for parameter " + p->name);
        }
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (int64_t k = 0; k < g.numel(); ++k) {
            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
            const double m_hat = m[k] / bc1;
            const double v_hat = v[k] / bc2;
            p->value[k] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
        }
    }
}

const Tensor& Adam::first_moment(const Parameter& p) const {
    for (size_t i = 0; i < params_.size(); ++i) {
        if (params_[i] == &p) return m_[i];
    }
    throw ValueError("Adam: parameter " + p.name + " is not registered");
}

const Tensor& Adam::second_moment(const Parameter& p) const {
    for (size_t i = 0; i < params_.size(); ++i) {
        if (params_[i] == &p) return v_[i];
    }
    throw ValueError("Adam: parameter " + p.name + " is not registered");
}

} // namespace vand
