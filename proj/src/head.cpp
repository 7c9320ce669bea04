#include "vand/head.hpp"

#include <cmath>

#include "vand/error.hpp"

namespace vand {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kVarFloor = 1e-6;

Tensor uniform_init(std::vector<int> shape, double bound, RandomStream& rng) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = (2.0 * rng.uniform() - 1.0) * bound;
    return t;
}
} // namespace

GaussianHeadParams make_head_params(int hidden, int output_dim, RandomStream& rng,
                                    const std::string& prefix) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    GaussianHeadParams p;
    p.hidden = hidden;
    p.output_dim = output_dim;
    p.w_mu = Parameter{prefix + ".w_mu", uniform_init({output_dim, hidden}, bound, rng)};
    p.b_mu = Parameter{prefix + ".b_mu", Tensor::zeros({output_dim})};
    p.w_v = Parameter{prefix + ".w_v", uniform_init({output_dim, hidden}, bound, rng)};
    p.b_v = Parameter{prefix + ".b_v", Tensor::zeros({output_dim})};
    return p;
}

std::pair<Value, Value> head_forward(Tape& tape, Value h, const GaussianHeadParams& p) {
    const int rows = h.val().rows();
    Value mu = add(matmul(h, transpose(tape.leaf(p.w_mu))), tile_rows(tape.leaf(p.b_mu), rows));
    Value v_raw = add(matmul(h, transpose(tape.leaf(p.w_v))), tile_rows(tape.leaf(p.b_v), rows));
    Value var = add(softplus(v_raw), kVarFloor);
    return {mu, var};
}

Value gaussian_nll(Value mu, Value var, Value y) {
    const Tensor& m = mu.val();
    if (!m.same_shape(var.val()) || !m.same_shape(y.val())) {
        throw ShapeError("gaussian_nll: mu/var/y shapes disagree");
    }
    for (int64_t i = 0; i < var.val().numel(); ++i) {
        if (!(var.val()[i] > 0.0)) throw ValueError("gaussian_nll: variance must be positive");
    }
    const double rows = static_cast<double>(m.ndim() == 2 ? m.rows() : 1);
    Value resid = sub(y, mu);
    Value quad = div(square(resid), var);
    Value logdet = log(mul(var, kTwoPi));
    Value total = reduce_sum(mul(add(logdet, quad), 0.5));
    return mul(total, 1.0 / rows);
}

double mse(const Tensor& pred, const Tensor& target) {
    if (!pred.same_shape(target)) {
        throw ShapeError("mse: shapes " + shape_str(pred) + " and " + shape_str(target) +
                         " disagree");
    }
    double acc = 0.0;
    for (int64_t i = 0; i < pred.numel(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.numel());
}

} // namespace vand
