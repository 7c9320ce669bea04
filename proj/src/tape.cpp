#include "vand/tape.hpp"

#include <cmath>

#include "vand/error.hpp"

namespace vand {

const Tensor& Value::val() const { return tape_->value(id_); }
bool Value::requires_grad() const { return tape_->requires_grad(id_); }

Value Tape::leaf(const Parameter& p) {
    auto it = param_leaves_.find(&p);
    if (it != param_leaves_.end()) return Value(this, it->second);
    NodeRec rec;
    rec.value = p.value;
    rec.requires_grad = true;
    rec.is_leaf = true;
    nodes_.push_back(std::move(rec));
    const NodeId id = static_cast<NodeId>(nodes_.size() - 1);
    param_leaves_.emplace(&p, id);
    return Value(this, id);
}

Value Tape::constant(Tensor t) {
    NodeRec rec;
    rec.value = std::move(t);
    rec.requires_grad = false;
    rec.is_leaf = true;
    nodes_.push_back(std::move(rec));
    return Value(this, static_cast<NodeId>(nodes_.size() - 1));
}

Value Tape::variable(Tensor t) {
    NodeRec rec;
    rec.value = std::move(t);
    rec.requires_grad = true;
    rec.is_leaf = true;
    nodes_.push_back(std::move(rec));
    return Value(this, static_cast<NodeId>(nodes_.size() - 1));
}

Value Tape::node(Tensor value, bool requires_grad) {
    NodeRec rec;
    rec.value = std::move(value);
    rec.requires_grad = requires_grad;
    rec.is_leaf = false;
    nodes_.push_back(std::move(rec));
    return Value(this, static_cast<NodeId>(nodes_.size() - 1));
}

void Tape::set_backward(NodeId id, BackwardFn fn) {
    nodes_[static_cast<size_t>(id)].back = std::move(fn);
}

void Tape::accumulate(NodeId id, const Tensor& g) {
    NodeRec& rec = nodes_[static_cast<size_t>(id)];
    if (!rec.requires_grad) return;
    Tensor& slot = grads_[static_cast<size_t>(id)];
    if (slot.numel() == 0) {
        slot = g;
        return;
    }
    for (int64_t i = 0; i < slot.numel(); ++i) slot[i] += g[i];
}

void Tape::accumulate(NodeId id, Tensor&& g) {
    NodeRec& rec = nodes_[static_cast<size_t>(id)];
    if (!rec.requires_grad) return;
    Tensor& slot = grads_[static_cast<size_t>(id)];
    if (slot.numel() == 0) {
        slot = std::move(g);
        return;
    }
    for (int64_t i = 0; i < slot.numel(); ++i) slot[i] += g[i];
}

std::unordered_map<NodeId, Tensor> Tape::backward(Value loss) {
    if (loss.tape() != this) throw ValueError("backward: loss belongs to a different tape");
    if (backward_done_) throw ValueError("backward: tape already consumed");
    if (loss.val().numel() != 1) {
        throw ShapeError("backward requires a scalar loss, got " + shape_str(loss.val()));
    }
    backward_done_ = true;

    grads_.assign(nodes_.size(), Tensor{});
    grads_[static_cast<size_t>(loss.id())] = Tensor::scalar(1.0);

    for (NodeId id = loss.id(); id >= 0; --id) {
        NodeRec& rec = nodes_[static_cast<size_t>(id)];
        Tensor& g = grads_[static_cast<size_t>(id)];
        if (!rec.requires_grad || g.numel() == 0) {
            if (!rec.is_leaf) g = Tensor{};
            continue;
        }
        if (rec.back) rec.back(*this, g);
        if (!rec.is_leaf) g = Tensor{}; // interior gradients freed once consumed
    }

    std::unordered_map<NodeId, Tensor> out;
    for (size_t i = 0; i < nodes_.size(); ++i) {
        const NodeRec& rec = nodes_[i];
        if (!rec.is_leaf || !rec.requires_grad) continue;
        Tensor& g = grads_[i];
        if (g.numel() == 0) g = Tensor::zeros(rec.value.shape());
        out.emplace(static_cast<NodeId>(i), std::move(g));
    }
    grads_.clear();
    return out;
}

NodeId Tape::leaf_id(const Parameter& p) const {
    auto it = param_leaves_.find(&p);
    return it == param_leaves_.end() ? -1 : it->second;
}

std::unordered_map<const Parameter*, Tensor>
Tape::param_grads(const std::unordered_map<NodeId, Tensor>& grads) const {
    std::unordered_map<const Parameter*, Tensor> out;
    for (const auto& [param, id] : param_leaves_) {
        auto it = grads.find(id);
        if (it != grads.end()) out.emplace(param, it->second);
    }
    return out;
}

// ---------------------------------------------------------------------------
// op helpers

namespace {

Tape& same_tape(Value a, Value b) {
    if (a.tape() != b.tape()) throw ValueError("operands belong to different tapes");
    return *a.tape();
}

enum class BinKind { add, sub, mul, div };

double bin_apply(BinKind k, double x, double y) {
    switch (k) {
        case BinKind::add: return x + y;
        case BinKind::sub: return x - y;
        case BinKind::mul: return x * y;
        case BinKind::div: return x / y;
    }
    return 0.0;
}

const char* bin_name(BinKind k) {
    switch (k) {
        case BinKind::add: return "add";
        case BinKind::sub: return "sub";
        case BinKind::mul: return "mul";
        case BinKind::div: return "div";
    }
    return "?";
}

// scalar-with-tensor broadcast only
Value binary_op(BinKind kind, Value a, Value b) {
    Tape& tape = same_tape(a, b);
    const Tensor& x = a.val();
    const Tensor& y = b.val();
    const bool same = x.same_shape(y);
    const bool a_scalar = x.is_scalar();
    const bool b_scalar = y.is_scalar();
    if (!same && !a_scalar && !b_scalar) {
        throw ShapeError(std::string(bin_name(kind)) + ": shapes " + shape_str(x) + " and " +
                         shape_str(y) + " are not broadcastable");
    }

    const Tensor& big = (!same && a_scalar) ? y : x;
    Tensor out(big.shape());
    if (same) {
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = bin_apply(kind, x[i], y[i]);
    } else if (a_scalar) {
        const double xv = x[0];
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = bin_apply(kind, xv, y[i]);
    } else {
        const double yv = y[0];
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = bin_apply(kind, x[i], yv);
    }

    const bool rg = a.requires_grad() || b.requires_grad();
    Value res = tape.node(std::move(out), rg);
    if (!rg) return res;

    const NodeId ida = a.id(), idb = b.id(), self = res.id();
    tape.set_backward(self, [kind, ida, idb, self, same, a_scalar, b_scalar](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(ida);
        const Tensor& y = t.value(idb);
        if (t.requires_grad(ida)) {
            Tensor ga(x.shape());
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] = 0.0;
            for (int64_t i = 0; i < g.numel(); ++i) {
                const double xv = (same || !a_scalar) ? x[i] : x[0];
                const double yv = (same || !b_scalar) ? y[i] : y[0];
                double d = 0.0;
                switch (kind) {
                    case BinKind::add: d = g[i]; break;
                    case BinKind::sub: d = g[i]; break;
                    case BinKind::mul: d = g[i] * yv; break;
                    case BinKind::div: d = g[i] / yv; break;
                }
                (void)xv;
                ga[(same || !a_scalar) ? i : 0] += d;
            }
            t.accumulate(ida, std::move(ga));
        }
        if (t.requires_grad(idb)) {
            Tensor gb(y.shape());
            for (int64_t i = 0; i < gb.numel(); ++i) gb[i] = 0.0;
            const Tensor& v = t.value(self);
            (void)v;
            for (int64_t i = 0; i < g.numel(); ++i) {
                const double xv = (same || !a_scalar) ? x[i] : x[0];
                const double yv = (same || !b_scalar) ? y[i] : y[0];
                double d = 0.0;
                switch (kind) {
                    case BinKind::add: d = g[i]; break;
                    case BinKind::sub: d = -g[i]; break;
                    case BinKind::mul: d = g[i] * xv; break;
                    case BinKind::div: d = -g[i] * xv / (yv * yv); break;
                }
                gb[(same || !b_scalar) ? i : 0] += d;
            }
            t.accumulate(idb, std::move(gb));
        }
    });
    return res;
}

template <typename Fwd, typename Bwd>
Value unary_op(Value a, Fwd fwd, Bwd bwd) {
    Tape& tape = *a.tape();
    const Tensor& x = a.val();
    Tensor out(x.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = fwd(x[i]);
    Value res = tape.node(std::move(out), a.requires_grad());
    if (!a.requires_grad()) return res;
    const NodeId ida = a.id(), self = res.id();
    tape.set_backward(self, [ida, self, bwd](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(ida);
        const Tensor& y = t.value(self);
        Tensor ga(x.shape());
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] = g[i] * bwd(x[i], y[i]);
        t.accumulate(ida, std::move(ga));
    });
    return res;
}

double softplus_scalar(double x) {
    // overflow-safe: softplus(x) = max(x,0) + log1p(exp(-|x|))
    return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

} // namespace

Value add(Value a, Value b) { return binary_op(BinKind::add, a, b); }
Value sub(Value a, Value b) { return binary_op(BinKind::sub, a, b); }
Value mul(Value a, Value b) { return binary_op(BinKind::mul, a, b); }
Value div(Value a, Value b) { return binary_op(BinKind::div, a, b); }

Value add(Value a, double c) { return add(a, a.tape()->constant(Tensor::scalar(c))); }
Value sub(double c, Value a) { return sub(a.tape()->constant(Tensor::scalar(c)), a); }
Value mul(Value a, double c) { return mul(a, a.tape()->constant(Tensor::scalar(c))); }

Value tanh(Value a) {
    return unary_op(
        a, [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Value sigmoid(Value a) {
    return unary_op(
        a, [](double x) { return sigmoid_scalar(x); },
        [](double, double y) { return y * (1.0 - y); });
}

Value softplus(Value a) {
    return unary_op(
        a, [](double x) { return softplus_scalar(x); },
        [](double x, double) { return sigmoid_scalar(x); });
}

Value exp(Value a) {
    return unary_op(
        a, [](double x) { return std::exp(x); },
        [](double, double y) { return y; });
}

Value log(Value a) {
    return unary_op(
        a, [](double x) { return std::log(x); },
        [](double x, double) { return 1.0 / x; });
}

Value neg(Value a) {
    return unary_op(
        a, [](double x) { return -x; },
        [](double, double) { return -1.0; });
}

Value square(Value a) {
    return unary_op(
        a, [](double x) { return x * x; },
        [](double x, double) { return 2.0 * x; });
}

Value matmul(Value a, Value b) {
    Tape& tape = same_tape(a, b);
    const Tensor& x = a.val();
    const Tensor& y = b.val();
    if (x.ndim() != 2 || y.ndim() != 2 || x.cols() != y.rows()) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(x) + " x " + shape_str(y));
    }
    Tensor out({x.rows(), y.cols()});
    gemm_nn(x, y, out, false);
    const bool rg = a.requires_grad() || b.requires_grad();
    Value res = tape.node(std::move(out), rg);
    if (!rg) return res;
    const NodeId ida = a.id(), idb = b.id();
    tape.set_backward(res.id(), [ida, idb](Tape& t, const Tensor& g) {
        if (t.requires_grad(ida)) {
            // dA = G·Bᵀ
            const Tensor& y = t.value(idb);
            Tensor ga({g.rows(), y.rows()});
            gemm_nt(g, y, ga, false);
            t.accumulate(ida, std::move(ga));
        }
        if (t.requires_grad(idb)) {
            // dB = Aᵀ·G
            const Tensor& x = t.value(ida);
            Tensor gb({x.cols(), g.cols()});
            gemm_tn(x, g, gb, false);
            t.accumulate(idb, std::move(gb));
        }
    });
    return res;
}

Value transpose(Value a) {
    Tape& tape = *a.tape();
    const Tensor& x = a.val();
    if (x.ndim() != 2) throw ShapeError("transpose requires a 2-D tensor, got " + shape_str(x));
    const int r = x.rows(), c = x.cols();
    Tensor out({c, r});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(j, i) = x.at(i, j);
    Value res = tape.node(std::move(out), a.requires_grad());
    if (!a.requires_grad()) return res;
    const NodeId ida = a.id();
    tape.set_backward(res.id(), [ida, r, c](Tape& t, const Tensor& g) {
        Tensor ga({r, c});
        for (int i = 0; i < c; ++i)
            for (int j = 0; j < r; ++j) ga.at(j, i) = g.at(i, j);
        t.accumulate(ida, std::move(ga));
    });
    return res;
}

Value slice_cols(Value a, int start, int width) {
    Tape& tape = *a.tape();
    const Tensor& x = a.val();
    if (x.ndim() != 2) throw ShapeError("slice_cols requires a 2-D tensor, got " + shape_str(x));
    if (start < 0 || width <= 0 || start + width > x.cols()) {
        throw ShapeError("slice_cols range [" + std::to_string(start) + ", " +
                         std::to_string(start + width) + ") out of bounds for " + shape_str(x));
    }
    const int r = x.rows(), c = x.cols();
    Tensor out({r, width});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < width; ++j) out.at(i, j) = x.at(i, start + j);
    Value res = tape.node(std::move(out), a.requires_grad());
    if (!a.requires_grad()) return res;
    const NodeId ida = a.id();
    tape.set_backward(res.id(), [ida, start, width, r, c](Tape& t, const Tensor& g) {
        Tensor ga({r, c});
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < width; ++j) ga.at(i, start + j) = g.at(i, j);
        t.accumulate(ida, std::move(ga));
    });
    return res;
}

Value tile_rows(Value v, int rows) {
    Tape& tape = *v.tape();
    const Tensor& x = v.val();
    if (x.ndim() != 1) throw ShapeError("tile_rows requires a 1-D tensor, got " + shape_str(x));
    if (rows <= 0) throw ShapeError("tile_rows requires rows >= 1");
    const int h = x.dim(0);
    Tensor out({rows, h});
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < h; ++j) out.at(i, j) = x[j];
    Value res = tape.node(std::move(out), v.requires_grad());
    if (!v.requires_grad()) return res;
    const NodeId idv = v.id();
    tape.set_backward(res.id(), [idv, rows, h](Tape& t, const Tensor& g) {
        Tensor gv({h});
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < h; ++j) gv[j] += g.at(i, j);
        t.accumulate(idv, std::move(gv));
    });
    return res;
}

Value reduce_sum(Value a) {
    Tape& tape = *a.tape();
    const Tensor& x = a.val();
    double s = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) s += x[i];
    Value res = tape.node(Tensor::scalar(s), a.requires_grad());
    if (!a.requires_grad()) return res;
    const NodeId ida = a.id();
    tape.set_backward(res.id(), [ida](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(ida);
        t.accumulate(ida, Tensor::full(x.shape(), g[0]));
    });
    return res;
}

Value reduce_mean(Value a) {
    Tape& tape = *a.tape();
    const Tensor& x = a.val();
    const double n = static_cast<double>(x.numel());
    double s = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) s += x[i];
    Value res = tape.node(Tensor::scalar(s / n), a.requires_grad());
    if (!a.requires_grad()) return res;
    const NodeId ida = a.id();
    tape.set_backward(res.id(), [ida, n](Tape& t, const Tensor& g) {
        const Tensor& x = t.value(ida);
        t.accumulate(ida, Tensor::full(x.shape(), g[0] / n));
    });
    return res;
}

Value stop_gradient(Value a) {
    return a.tape()->constant(a.val());
}

Value straight_through(Value x, Tensor sampled) {
    Tape& tape = *x.tape();
    if (!x.val().same_shape(sampled)) {
        throw ShapeError("straight_through: sample shape " + shape_str(sampled) +
                         " does not match " + shape_str(x.val()));
    }
    Value res = tape.node(std::move(sampled), x.requires_grad());
    if (!x.requires_grad()) return res;
    const NodeId idx = x.id();
    tape.set_backward(res.id(), [idx](Tape& t, const Tensor& g) { t.accumulate(idx, g); });
    return res;
}

double grad_check(const std::function<Value(Tape&, Value)>& f, const Tensor& x, double step) {
    if (step <= 0.0) throw ValueError("grad_check requires step > 0");

    Tensor autograd;
    {
        Tape tape;
        Value xv = tape.variable(x);
        Value loss = f(tape, xv);
        if (loss.val().numel() != 1) throw ShapeError("grad_check: f must be scalar-valued");
        if (!loss.val().all_finite()) throw NonFiniteError("grad_check: f(x) is not finite");
        auto grads = tape.backward(loss);
        autograd = std::move(grads.at(xv.id()));
    }

    auto eval = [&](const Tensor& xin) {
        Tape tape;
        Value xv = tape.constant(xin);
        return f(tape, xv).val().item();
    };

    double max_rel = 0.0;
    Tensor probe = x;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + step;
        const double fp = eval(probe);
        probe[i] = orig - step;
        const double fm = eval(probe);
        probe[i] = orig;
        const double cd = (fp - fm) / (2.0 * step);
        const double rel = std::fabs(autograd[i] - cd) / std::max(1e-12, std::fabs(cd));
        if (rel > max_rel) max_rel = rel;
    }
    return max_rel;
}

} // namespace vand
