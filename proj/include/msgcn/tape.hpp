#pragma once

#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "msgcn/common.hpp"
#include "msgcn/tensor.hpp"

namespace msgcn {

/// Trainable value: tensor plus an accumulated gradient of the same shape.
struct Parameter {
    Tensor value;
    Tensor grad;
    std::string name;

    Parameter() = default;
    Parameter(Tensor v, std::string n)
        : value(std::move(v)), grad(Tensor::zeros(value.shape())), name(std::move(n)) {}

    void zero_grad() { grad.fill(0.0); }
};

using NodeId = int;

/// Record of one forward pass. Operations append nodes in execution order;
/// backward() walks them in exact reverse order, pushing each node's gradient
/// into its inputs (and into Parameter::grad at parameter leaves). One record
/// supports exactly one backward pass.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

    NodeId constant(Tensor v) { return push(std::move(v), nullptr); }

    /// Parameter leaf. Repeated use of the same parameter returns the same
    /// node, so its gradient is accumulated once per backward pass.
    NodeId use(Parameter& p) {
        auto it = param_nodes_.find(&p);
        if (it != param_nodes_.end()) return it->second;
        Parameter* pp = &p;
        const NodeId id = push(p.value, [pp](Tape&, const Tensor& g) { pp->grad.add_(g); });
        param_nodes_.emplace(pp, id);
        return id;
    }

    NodeId node(Tensor v, BackwardFn back) { return push(std::move(v), std::move(back)); }

    const Tensor& value(NodeId id) const { return recs_[static_cast<std::size_t>(id)].value; }

    /// Gradient buffer for a node, allocated to zeros on first touch.
    Tensor& grad(NodeId id) {
        Rec& r = recs_[static_cast<std::size_t>(id)];
        if (r.grad.empty()) r.grad = Tensor::zeros(r.value.shape());
        return r.grad;
    }

    bool has_grad(NodeId id) const { return !recs_[static_cast<std::size_t>(id)].grad.empty(); }

    void accumulate(NodeId id, const Tensor& g) { grad(id).add_(g); }

    /// Reverse sweep from a scalar root. Nodes recorded after the root cannot
    /// feed it and are skipped.
    void backward(NodeId root) {
        if (backward_done_) throw StateError("backward already run on this record");
        const Tensor& rv = value(root);
        if (rv.numel() != 1) {
            throw DimensionError("backward: root must be scalar, got " + rv.shape_str());
        }
        backward_done_ = true;
        grad(root)[0] = 1.0;
        for (NodeId id = root; id >= 0; --id) {
            Rec& r = recs_[static_cast<std::size_t>(id)];
            if (!r.grad.empty() && r.back) r.back(*this, r.grad);
        }
    }

    int size() const { return static_cast<int>(recs_.size()); }

private:
    struct Rec {
        Tensor value;
        Tensor grad;
        BackwardFn back;
    };

    NodeId push(Tensor v, BackwardFn back) {
        recs_.push_back(Rec{std::move(v), Tensor(), std::move(back)});
        return static_cast<NodeId>(recs_.size()) - 1;
    }

    // Deque keeps value/grad references stable while new nodes are recorded.
    std::deque<Rec> recs_;
    std::unordered_map<const Parameter*, NodeId> param_nodes_;
    bool backward_done_ = false;
};

}  // namespace msgcn
