#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "vand/tensor.hpp"

namespace vand {

class Tape;
using NodeId = int32_t;

/// Named persistent tensor (model weight or regularizer parameter). Lives
/// outside any tape; a tape creates at most one leaf node per Parameter.
struct Parameter {
    std::string name;
    Tensor value;
};

/// Handle to a node on a tape.
class Value {
public:
    Value() = default;
    const Tensor& val() const;
    NodeId id() const { return id_; }
    Tape* tape() const { return tape_; }
    bool valid() const { return tape_ != nullptr; }
    bool requires_grad() const;

private:
    friend class Tape;
    Value(Tape* tape, NodeId id) : tape_(tape), id_(id) {}
    Tape* tape_ = nullptr;
    NodeId id_ = -1;
};

using BackwardFn = std::function<void(Tape&, const Tensor& grad)>;

/// Recorded computation graph for one reverse-mode sweep. Nodes are appended
/// in creation order, which is a topological order of the (acyclic) graph;
/// backward walks it once in reverse. A tape is confined to one worker.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Grad-tracked leaf for a Parameter; repeated calls return the same node.
    Value leaf(const Parameter& p);
    /// Untracked constant leaf.
    Value constant(Tensor t);
    /// Grad-tracked anonymous leaf (tests, grad_check).
    Value variable(Tensor t);
    /// Interior node; `back` receives the node's output gradient and is
    /// responsible for accumulating into its parents.
    Value node(Tensor value, bool requires_grad);
    void set_backward(NodeId id, BackwardFn fn);

    const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    bool requires_grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].requires_grad; }
    size_t size() const { return nodes_.size(); }

    /// Gradient accumulation during backward; no-op for untracked nodes.
    void accumulate(NodeId id, const Tensor& g);
    void accumulate(NodeId id, Tensor&& g);

    /// Reverse sweep from a scalar loss. Returns gradients for every
    /// grad-tracked leaf (zeros when the leaf is unreachable from the loss).
    /// May be called once per tape; interior gradients are freed as the
    /// sweep passes them.
    std::unordered_map<NodeId, Tensor> backward(Value loss);

    /// Leaf id previously created for a Parameter, or -1.
    NodeId leaf_id(const Parameter& p) const;

    /// Gradients keyed back to Parameters after backward().
    std::unordered_map<const Parameter*, Tensor>
    param_grads(const std::unordered_map<NodeId, Tensor>& grads) const;

private:
    struct NodeRec {
        Tensor value;
        BackwardFn back;
        bool requires_grad = false;
        bool is_leaf = false;
    };
    std::vector<NodeRec> nodes_;
    std::vector<Tensor> grads_;
    std::unordered_map<const Parameter*, NodeId> param_leaves_;
    bool backward_done_ = false;
};

// ---- elementwise ops (binary ops broadcast scalar-with-tensor only) ----
Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value div(Value a, Value b);
Value tanh(Value a);
Value sigmoid(Value a);
Value softplus(Value a);
Value exp(Value a);
Value log(Value a);
Value neg(Value a);
Value square(Value a);

// scalar-constant conveniences
Value add(Value a, double c);
Value sub(double c, Value a);
Value mul(Value a, double c);

inline Value operator+(Value a, Value b) { return add(a, b); }
inline Value operator-(Value a, Value b) { return sub(a, b); }
inline Value operator*(Value a, Value b) { return mul(a, b); }
inline Value operator/(Value a, Value b) { return div(a, b); }

// ---- structural ops ----
Value matmul(Value a, Value b);
Value transpose(Value a);
Value slice_cols(Value a, int start, int width);
Value tile_rows(Value v, int rows); // v: [H] -> [rows x H]; grad = column sum

// ---- reductions ----
Value reduce_sum(Value a);
Value reduce_mean(Value a);

/// Value copied bit-for-bit, detached from the graph.
Value stop_gradient(Value a);

/// Forward value is `sampled`; gradient passes to `x` unchanged
/// (straight-through estimator). Shapes must match.
Value straight_through(Value x, Tensor sampled);

/// Max over coordinates of |autodiff - central difference| / max(1e-12, |cd|)
/// for a scalar function built from tape ops. Only meaningful on
/// stop-gradient-free graphs. Throws NonFiniteError if f(x) is not finite.
double grad_check(const std::function<Value(Tape&, Value)>& f, const Tensor& x, double step);

} // namespace vand
