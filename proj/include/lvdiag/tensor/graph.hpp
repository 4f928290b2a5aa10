#pragma once

#include "lvdiag/tensor/tensor.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

namespace lvdiag {

enum class OpKind {
    leaf,
    conv3d,             // (x, w, b): x (Ci,D,H,W), w (Co,Ci,KD,KH,KW), b (Co)
    transposed_conv3d,  // (x, w, b): x (Ci,D,H,W), w (Ci,Co,KD,KH,KW), b (Co)
    maxpool3d,
    relu,
    sigmoid,
    softmax,            // along AxisAttrs::axis
    dense,              // (x, w, b): x (n,in), w (in,out), b (out)
    dropout,
    concat,             // along AxisAttrs::axis
    add,
    sub,
    mul,
    div,
    affine,             // scale * x + shift
    log,
    reduce_sum,
    reduce_mean,
    bce_with_logits,        // (logits, target) -> mean binary cross-entropy
    softmax_cross_entropy,  // (logits (n,k), target (n,k)) -> mean over rows
};

std::string_view op_name(OpKind kind);

struct Conv3dAttrs {
    std::array<std::size_t, 3> stride{1, 1, 1};
    std::array<std::size_t, 3> padding{0, 0, 0};
};

struct Pool3dAttrs {
    std::array<std::size_t, 3> kernel{2, 2, 2};
    std::array<std::size_t, 3> stride{2, 2, 2};
};

/// Inverted dropout: kept entries are divided by keep_prob, so inference is identity.
struct DropoutAttrs {
    double keep_prob = 0.5;
    bool training = true;
    std::uint64_t seed = 0;
};

struct AxisAttrs {
    std::size_t axis = 0;
};

struct AffineAttrs {
    double scale = 1.0;
    double shift = 0.0;
};

using OpAttrs = std::variant<std::monostate, Conv3dAttrs, Pool3dAttrs, DropoutAttrs, AxisAttrs, AffineAttrs>;

/// Handle to a node of a Graph.
struct Var {
    std::size_t id = 0;
};

class Graph;

/// Adjoints produced by Graph::backward, indexed by node.
class Gradients {
public:
    /// Gradient of the seed w.r.t. `v`; zeros when no gradient reached it.
    Tensor of(Var v) const;
    /// Null when no gradient reached `v`.
    const Tensor* find(Var v) const;

private:
    friend class Graph;
    std::vector<Tensor> adjoint_;
    std::vector<Shape> shapes_;
};

/// Tape of forward ops recorded in topological order. Confined to one thread.
class Graph {
public:
    /// Constant leaf; gradients are not propagated into it.
    Var input(Tensor value);
    /// Trainable leaf; receives a gradient in backward().
    Var parameter(Tensor value);

    /// Records `kind` applied to `inputs`; throws ShapeError on incompatible shapes.
    Var apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs = {});

    Var conv3d(Var x, Var w, Var b, Conv3dAttrs attrs = {});
    Var transposed_conv3d(Var x, Var w, Var b, Conv3dAttrs attrs);
    Var maxpool3d(Var x, Pool3dAttrs attrs = {});
    Var relu(Var x);
    Var sigmoid(Var x);
    Var softmax(Var x, std::size_t axis);
    Var dense(Var x, Var w, Var b);
    Var dropout(Var x, DropoutAttrs attrs);
    Var concat(std::span<const Var> xs, std::size_t axis);
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var affine(Var x, double scale, double shift);
    Var log(Var x);
    Var reduce_sum(Var x);
    Var reduce_mean(Var x);
    Var bce_with_logits(Var logits, Var target);
    Var softmax_cross_entropy(Var logits, Var target);

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    OpKind kind(Var v) const { return nodes_.at(v.id).kind; }
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Reverse sweep from a single-element node, seeded with 1.
    Gradients backward(Var output) const;

private:
    struct Node {
        OpKind kind = OpKind::leaf;
        std::vector<std::size_t> inputs;
        Tensor value;
        OpAttrs attrs;
        Tensor cache;                        // dropout mask, softmax output
        std::vector<std::size_t> argmax;     // maxpool winners
        bool requires_grad = false;
    };

    Var push(Node node);
    void backward_node(const Node& node, const Tensor& grad, std::vector<Tensor>& adjoint) const;

    std::vector<Node> nodes_;
};

} // namespace lvdiag
