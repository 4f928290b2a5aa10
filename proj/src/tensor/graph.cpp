#include "lvdiag/tensor/graph.hpp"

#include "conv_kernels.hpp"
#include "lvdiag/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace lvdiag {
namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using VecMap = Eigen::Map<Eigen::VectorXd>;
using CVecMap = Eigen::Map<const Eigen::VectorXd>;

[[noreturn]] void shape_fail(OpKind kind, const std::string& what) {
    throw ShapeError(std::string(op_name(kind)) + ": " + what);
}

void expect_rank(OpKind kind, const char* name, const Tensor& t, std::size_t rank) {
    if (t.rank() != rank)
        shape_fail(kind, std::string(name) + " must have rank " + std::to_string(rank) + ", got " +
                             shape_str(t.shape()));
}

void expect_same(OpKind kind, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_fail(kind, "operand shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void accumulate(std::vector<Tensor>& adjoint, std::size_t id, const Tensor& g) {
    Tensor& dst = adjoint[id];
    if (dst.empty()) {
        dst = g;
        return;
    }
    VecMap(dst.data().data(), Eigen::Index(dst.size())) += CVecMap(g.data().data(), Eigen::Index(g.size()));
}

double sigmoid_scalar(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

struct AxisSplit {
    std::size_t outer, n, inner;
};

AxisSplit split_at(const Shape& s, std::size_t axis) {
    AxisSplit a{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
    return a;
}

void add_bias(Tensor& out, const Tensor& b) {
    const std::size_t per = out.size() / out.dim(0);
    for (std::size_t c = 0; c < out.dim(0); ++c) {
        double* p = out.data().data() + c * per;
        const double bc = b[c];
        for (std::size_t i = 0; i < per; ++i) p[i] += bc;
    }
}

Tensor bias_grad(const Tensor& g) {
    const std::size_t per = g.size() / g.dim(0);
    Tensor gb({g.dim(0)});
    for (std::size_t c = 0; c < g.dim(0); ++c) gb[c] = CVecMap(g.data().data() + c * per, Eigen::Index(per)).sum();
    return gb;
}

void check_conv_operands(OpKind kind, const Tensor& x, const Tensor& w, const Tensor& b, std::size_t out_channels,
                         std::size_t in_channels_axis) {
    expect_rank(kind, "input", x, 4);
    expect_rank(kind, "weight", w, 5);
    expect_rank(kind, "bias", b, 1);
    if (w.dim(in_channels_axis) != x.dim(0))
        shape_fail(kind, "input has " + std::to_string(x.dim(0)) + " channels but weight " + shape_str(w.shape()) +
                             " expects " + std::to_string(w.dim(in_channels_axis)));
    if (b.dim(0) != out_channels)
        shape_fail(kind, "bias length " + std::to_string(b.dim(0)) + " != output channels " +
                             std::to_string(out_channels));
}

} // namespace

std::string_view op_name(OpKind kind) {
    switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::conv3d: return "conv3d";
    case OpKind::transposed_conv3d: return "transposed_conv3d";
    case OpKind::maxpool3d: return "maxpool3d";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::softmax: return "softmax";
    case OpKind::dense: return "dense";
    case OpKind::dropout: return "dropout";
    case OpKind::concat: return "concat";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::affine: return "affine";
    case OpKind::log: return "log";
    case OpKind::reduce_sum: return "reduce_sum";
    case OpKind::reduce_mean: return "reduce_mean";
    case OpKind::bce_with_logits: return "bce_with_logits";
    case OpKind::softmax_cross_entropy: return "softmax_cross_entropy";
    }
    return "unknown";
}

Tensor Gradients::of(Var v) const {
    if (const Tensor* g = find(v)) return *g;
    return Tensor(shapes_.at(v.id));
}

const Tensor* Gradients::find(Var v) const {
    if (v.id >= adjoint_.size() || adjoint_[v.id].empty()) return nullptr;
    return &adjoint_[v.id];
}

Var Graph::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Var Graph::input(Tensor value) {
    Node n;
    n.value = std::move(value);
    return push(std::move(n));
}

Var Graph::parameter(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

Var Graph::apply(OpKind kind, std::span<const Var> inputs, const OpAttrs& attrs) {
    auto arity = [&](std::size_t n) {
        if (inputs.size() != n)
            shape_fail(kind, "expects " + std::to_string(n) + " inputs, got " + std::to_string(inputs.size()));
    };
    for (Var v : inputs)
        if (v.id >= nodes_.size()) shape_fail(kind, "unknown input node " + std::to_string(v.id));
    auto in = [&](std::size_t i) -> const Tensor& { return nodes_[inputs[i].id].value; };

    Node node;
    node.kind = kind;
    node.attrs = attrs;
    for (Var v : inputs) {
        node.inputs.push_back(v.id);
        node.requires_grad = node.requires_grad || nodes_[v.id].requires_grad;
    }

    switch (kind) {
    case OpKind::leaf:
        shape_fail(kind, "leaves are created with input() or parameter()");

    case OpKind::conv3d: {
        arity(3);
        const auto& a = std::get<Conv3dAttrs>(attrs);
        const Tensor& x = in(0);
        const Tensor& w = in(1);
        check_conv_operands(kind, x, w, in(2), w.rank() == 5 ? w.dim(0) : 0, 1);
        for (std::size_t ax = 0; ax < 3; ++ax)
            if (detail::conv_out_extent(x.dim(ax + 1), w.dim(ax + 2), a.stride[ax], a.padding[ax]) == 0)
                shape_fail(kind, "kernel " + shape_str(w.shape()) + " does not fit input " + shape_str(x.shape()) +
                                     " on spatial axis " + std::to_string(ax));
        node.value = detail::conv3d_forward(x, w, a.stride, a.padding);
        add_bias(node.value, in(2));
        break;
    }
    case OpKind::transposed_conv3d: {
        arity(3);
        const auto& a = std::get<Conv3dAttrs>(attrs);
        const Tensor& x = in(0);
        const Tensor& w = in(1);
        check_conv_operands(kind, x, w, in(2), w.rank() == 5 ? w.dim(1) : 0, 0);
        Shape out{w.dim(1), 0, 0, 0};
        for (std::size_t ax = 0; ax < 3; ++ax) {
            const std::size_t full = (x.dim(ax + 1) - 1) * a.stride[ax] + w.dim(ax + 2);
            if (a.stride[ax] == 0 || full <= 2 * a.padding[ax])
                shape_fail(kind, "padding too large for input " + shape_str(x.shape()));
            out[ax + 1] = full - 2 * a.padding[ax];
        }
        // The transposed conv is the data-adjoint of a conv whose weight has the
        // same (Ci,Co,...) layout read as (Co',Ci',...).
        node.value = detail::conv3d_backward_data(x, w, out, a.stride, a.padding);
        add_bias(node.value, in(2));
        break;
    }
    case OpKind::maxpool3d: {
        arity(1);
        const auto& a = std::get<Pool3dAttrs>(attrs);
        const Tensor& x = in(0);
        expect_rank(kind, "input", x, 4);
        Shape out{x.dim(0), 0, 0, 0};
        for (std::size_t ax = 0; ax < 3; ++ax) {
            out[ax + 1] = detail::conv_out_extent(x.dim(ax + 1), a.kernel[ax], a.stride[ax], 0);
            if (a.kernel[ax] == 0 || out[ax + 1] == 0)
                shape_fail(kind, "window " + std::to_string(a.kernel[ax]) + " does not fit input " +
                                     shape_str(x.shape()) + " on spatial axis " + std::to_string(ax));
        }
        node.value = Tensor(out);
        node.argmax.resize(node.value.size());
        const std::size_t D = x.dim(1), H = x.dim(2), W = x.dim(3);
        std::size_t o = 0;
        for (std::size_t c = 0; c < out[0]; ++c)
            for (std::size_t od = 0; od < out[1]; ++od)
                for (std::size_t oh = 0; oh < out[2]; ++oh)
                    for (std::size_t ow = 0; ow < out[3]; ++ow, ++o) {
                        std::size_t best = 0;
                        double best_v = -INFINITY;
                        for (std::size_t kd = 0; kd < a.kernel[0]; ++kd)
                            for (std::size_t kh = 0; kh < a.kernel[1]; ++kh)
                                for (std::size_t kw = 0; kw < a.kernel[2]; ++kw) {
                                    const std::size_t idx =
                                        ((c * D + od * a.stride[0] + kd) * H + oh * a.stride[1] + kh) * W +
                                        ow * a.stride[2] + kw;
                                    if (x[idx] > best_v) {
                                        best_v = x[idx];
                                        best = idx;
                                    }
                                }
                        node.value[o] = best_v;
                        node.argmax[o] = best;
                    }
        break;
    }
    case OpKind::relu: {
        arity(1);
        node.value = in(0);
        for (double& v : node.value.data()) v = v > 0.0 ? v : 0.0;
        break;
    }
    case OpKind::sigmoid: {
        arity(1);
        node.value = in(0);
        for (double& v : node.value.data()) v = sigmoid_scalar(v);
        break;
    }
    case OpKind::softmax: {
        arity(1);
        const std::size_t axis = std::get<AxisAttrs>(attrs).axis;
        const Tensor& x = in(0);
        if (axis >= x.rank()) shape_fail(kind, "axis " + std::to_string(axis) + " out of range for " + shape_str(x.shape()));
        node.value = x;
        const AxisSplit s = split_at(x.shape(), axis);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.inner; ++i) {
                double* base = node.value.data().data() + o * s.n * s.inner + i;
                double mx = -INFINITY;
                for (std::size_t k = 0; k < s.n; ++k) mx = std::max(mx, base[k * s.inner]);
                double z = 0.0;
                for (std::size_t k = 0; k < s.n; ++k) z += (base[k * s.inner] = std::exp(base[k * s.inner] - mx));
                for (std::size_t k = 0; k < s.n; ++k) base[k * s.inner] /= z;
            }
        break;
    }
    case OpKind::dense: {
        arity(3);
        const Tensor& x = in(0);
        const Tensor& w = in(1);
        const Tensor& b = in(2);
        expect_rank(kind, "input", x, 2);
        expect_rank(kind, "weight", w, 2);
        expect_rank(kind, "bias", b, 1);
        if (x.dim(1) != w.dim(0))
            shape_fail(kind, "input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
        if (b.dim(0) != w.dim(1))
            shape_fail(kind, "bias " + shape_str(b.shape()) + " incompatible with weight " + shape_str(w.shape()));
        const Eigen::Index n = Eigen::Index(x.dim(0)), k = Eigen::Index(x.dim(1)), m = Eigen::Index(w.dim(1));
        node.value = Tensor({x.dim(0), w.dim(1)});
        Eigen::Map<MatRM> out(node.value.data().data(), n, m);
        out.noalias() = Eigen::Map<const MatRM>(x.data().data(), n, k) * Eigen::Map<const MatRM>(w.data().data(), k, m);
        out.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), m);
        break;
    }
    case OpKind::dropout: {
        arity(1);
        const auto& a = std::get<DropoutAttrs>(attrs);
        if (!(a.keep_prob > 0.0 && a.keep_prob <= 1.0))
            shape_fail(kind, "keep probability must lie in (0,1], got " + std::to_string(a.keep_prob));
        node.value = in(0);
        if (a.training) {
            node.cache = Tensor(node.value.shape());
            Rng rng(a.seed);
            const double scale = 1.0 / a.keep_prob;
            for (std::size_t i = 0; i < node.value.size(); ++i) {
                node.cache[i] = rng.uniform(0.0, 1.0) < a.keep_prob ? scale : 0.0;
                node.value[i] *= node.cache[i];
            }
        }
        break;
    }
    case OpKind::concat: {
        if (inputs.empty()) shape_fail(kind, "needs at least one input");
        const std::size_t axis = std::get<AxisAttrs>(attrs).axis;
        Shape out = in(0).shape();
        if (axis >= out.size()) shape_fail(kind, "axis " + std::to_string(axis) + " out of range for " + shape_str(out));
        out[axis] = 0;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            Shape s = in(i).shape();
            if (s.size() != out.size()) shape_fail(kind, "rank mismatch at input " + std::to_string(i));
            out[axis] += s[axis];
            s[axis] = 0;
            Shape ref = in(0).shape();
            ref[axis] = 0;
            if (s != ref)
                shape_fail(kind, "input " + std::to_string(i) + " shape " + shape_str(in(i).shape()) +
                                     " incompatible with " + shape_str(in(0).shape()) + " off axis " +
                                     std::to_string(axis));
        }
        node.value = Tensor(out);
        const AxisSplit s = split_at(out, axis);
        std::size_t at = 0;
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            const Tensor& t = in(i);
            const std::size_t chunk = t.dim(axis) * s.inner;
            for (std::size_t o = 0; o < s.outer; ++o)
                std::copy_n(t.data().data() + o * chunk, chunk, node.value.data().data() + o * s.n * s.inner + at);
            at += chunk;
        }
        break;
    }
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul:
    case OpKind::div: {
        arity(2);
        expect_same(kind, in(0), in(1));
        node.value = in(0);
        const Tensor& b = in(1);
        for (std::size_t i = 0; i < b.size(); ++i) {
            double& v = node.value[i];
            switch (kind) {
            case OpKind::add: v += b[i]; break;
            case OpKind::sub: v -= b[i]; break;
            case OpKind::mul: v *= b[i]; break;
            default: v /= b[i]; break;
            }
        }
        break;
    }
    case OpKind::affine: {
        arity(1);
        const auto& a = std::get<AffineAttrs>(attrs);
        node.value = in(0);
        for (double& v : node.value.data()) v = a.scale * v + a.shift;
        break;
    }
    case OpKind::log: {
        arity(1);
        node.value = in(0);
        for (double& v : node.value.data()) v = std::log(v);
        break;
    }
    case OpKind::reduce_sum:
    case OpKind::reduce_mean: {
        arity(1);
        double s = in(0).sum();
        if (kind == OpKind::reduce_mean) s /= double(in(0).size());
        node.value = Tensor::scalar(s);
        break;
    }
    case OpKind::bce_with_logits: {
        arity(2);
        expect_same(kind, in(0), in(1));
        const Tensor& z = in(0);
        const Tensor& t = in(1);
        double s = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i)
            s += std::max(z[i], 0.0) - z[i] * t[i] + std::log1p(std::exp(-std::abs(z[i])));
        node.value = Tensor::scalar(s / double(z.size()));
        break;
    }
    case OpKind::softmax_cross_entropy: {
        arity(2);
        expect_same(kind, in(0), in(1));
        const Tensor& z = in(0);
        expect_rank(kind, "logits", z, 2);
        const Tensor& t = in(1);
        const std::size_t n = z.dim(0), k = z.dim(1);
        node.cache = Tensor(z.shape());  // log-softmax
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
            const double* zr = z.data().data() + r * k;
            const double mx = *std::max_element(zr, zr + k);
            double lse = 0.0;
            for (std::size_t c = 0; c < k; ++c) lse += std::exp(zr[c] - mx);
            lse = mx + std::log(lse);
            for (std::size_t c = 0; c < k; ++c) {
                node.cache[r * k + c] = zr[c] - lse;
                s -= t[r * k + c] * node.cache[r * k + c];
            }
        }
        node.value = Tensor::scalar(s / double(n));
        break;
    }
    }
    return push(std::move(node));
}

Var Graph::conv3d(Var x, Var w, Var b, Conv3dAttrs attrs) {
    const Var in[] = {x, w, b};
    return apply(OpKind::conv3d, in, attrs);
}
Var Graph::transposed_conv3d(Var x, Var w, Var b, Conv3dAttrs attrs) {
    const Var in[] = {x, w, b};
    return apply(OpKind::transposed_conv3d, in, attrs);
}
Var Graph::maxpool3d(Var x, Pool3dAttrs attrs) {
    const Var in[] = {x};
    return apply(OpKind::maxpool3d, in, attrs);
}
Var Graph::relu(Var x) {
    const Var in[] = {x};
    return apply(OpKind::relu, in);
}
Var Graph::sigmoid(Var x) {
    const Var in[] = {x};
    return apply(OpKind::sigmoid, in);
}
Var Graph::softmax(Var x, std::size_t axis) {
    const Var in[] = {x};
    return apply(OpKind::softmax, in, AxisAttrs{axis});
}
Var Graph::dense(Var x, Var w, Var b) {
    const Var in[] = {x, w, b};
    return apply(OpKind::dense, in);
}
Var Graph::dropout(Var x, DropoutAttrs attrs) {
    const Var in[] = {x};
    return apply(OpKind::dropout, in, attrs);
}
Var Graph::concat(std::span<const Var> xs, std::size_t axis) { return apply(OpKind::concat, xs, AxisAttrs{axis}); }
Var Graph::add(Var a, Var b) {
    const Var in[] = {a, b};
    return apply(OpKind::add, in);
}
Var Graph::sub(Var a, Var b) {
    const Var in[] = {a, b};
    return apply(OpKind::sub, in);
}
Var Graph::mul(Var a, Var b) {
    const Var in[] = {a, b};
    return apply(OpKind::mul, in);
}
Var Graph::div(Var a, Var b) {
    const Var in[] = {a, b};
    return apply(OpKind::div, in);
}
Var Graph::affine(Var x, double scale, double shift) {
    const Var in[] = {x};
    return apply(OpKind::affine, in, AffineAttrs{scale, shift});
}
Var Graph::log(Var x) {
    const Var in[] = {x};
    return apply(OpKind::log, in);
}
Var Graph::reduce_sum(Var x) {
    const Var in[] = {x};
    return apply(OpKind::reduce_sum, in);
}
Var Graph::reduce_mean(Var x) {
    const Var in[] = {x};
    return apply(OpKind::reduce_mean, in);
}
Var Graph::bce_with_logits(Var logits, Var target) {
    const Var in[] = {logits, target};
    return apply(OpKind::bce_with_logits, in);
}
Var Graph::softmax_cross_entropy(Var logits, Var target) {
    const Var in[] = {logits, target};
    return apply(OpKind::softmax_cross_entropy, in);
}

Gradients Graph::backward(Var output) const {
    if (output.id >= nodes_.size()) throw std::out_of_range("backward: unknown node");
    if (nodes_[output.id].value.size() != 1)
        throw ShapeError("backward: seed node " + std::to_string(output.id) + " (" +
                         std::string(op_name(nodes_[output.id].kind)) + ") is not scalar: " +
                         shape_str(nodes_[output.id].value.shape()));
    Gradients grads;
    grads.adjoint_.resize(nodes_.size());
    grads.shapes_.reserve(nodes_.size());
    for (const Node& n : nodes_) grads.shapes_.push_back(n.value.shape());
    grads.adjoint_[output.id] = Tensor(nodes_[output.id].value.shape(), 1.0);
    for (std::size_t id = output.id + 1; id-- > 0;) {
        const Node& n = nodes_[id];
        if (n.kind == OpKind::leaf || !n.requires_grad || grads.adjoint_[id].empty()) continue;
        backward_node(n, grads.adjoint_[id], grads.adjoint_);
        // Intermediate adjoints are kept so callers can read gradients at any node.
    }
    return grads;
}

void Graph::backward_node(const Node& n, const Tensor& g, std::vector<Tensor>& adjoint) const {
    auto in = [&](std::size_t i) -> const Tensor& { return nodes_[n.inputs[i]].value; };
    auto wants = [&](std::size_t i) { return nodes_[n.inputs[i]].requires_grad; };
    auto give = [&](std::size_t i, const Tensor& t) { accumulate(adjoint, n.inputs[i], t); };

    switch (n.kind) {
    case OpKind::leaf:
        break;
    case OpKind::conv3d: {
        const auto& a = std::get<Conv3dAttrs>(n.attrs);
        if (wants(0)) give(0, detail::conv3d_backward_data(g, in(1), in(0).shape(), a.stride, a.padding));
        if (wants(1)) give(1, detail::conv3d_backward_weight(in(0), g, in(1).shape(), a.stride, a.padding));
        if (wants(2)) give(2, bias_grad(g));
        break;
    }
    case OpKind::transposed_conv3d: {
        const auto& a = std::get<Conv3dAttrs>(n.attrs);
        if (wants(0)) give(0, detail::conv3d_forward(g, in(1), a.stride, a.padding));
        if (wants(1)) give(1, detail::conv3d_backward_weight(g, in(0), in(1).shape(), a.stride, a.padding));
        if (wants(2)) give(2, bias_grad(g));
        break;
    }
    case OpKind::maxpool3d: {
        if (!wants(0)) break;
        Tensor gx(in(0).shape());
        for (std::size_t o = 0; o < g.size(); ++o) gx[n.argmax[o]] += g[o];
        give(0, gx);
        break;
    }
    case OpKind::relu: {
        if (!wants(0)) break;
        Tensor gx = g;
        const Tensor& x = in(0);
        for (std::size_t i = 0; i < gx.size(); ++i)
            if (!(x[i] > 0.0)) gx[i] = 0.0;
        give(0, gx);
        break;
    }
    case OpKind::sigmoid: {
        if (!wants(0)) break;
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= n.value[i] * (1.0 - n.value[i]);
        give(0, gx);
        break;
    }
    case OpKind::softmax: {
        if (!wants(0)) break;
        const AxisSplit s = split_at(n.value.shape(), std::get<AxisAttrs>(n.attrs).axis);
        Tensor gx(n.value.shape());
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = o * s.n * s.inner + i;
                double dot = 0.0;
                for (std::size_t k = 0; k < s.n; ++k) dot += g[base + k * s.inner] * n.value[base + k * s.inner];
                for (std::size_t k = 0; k < s.n; ++k) {
                    const std::size_t j = base + k * s.inner;
                    gx[j] = n.value[j] * (g[j] - dot);
                }
            }
        give(0, gx);
        break;
    }
    case OpKind::dense: {
        const Tensor& x = in(0);
        const Tensor& w = in(1);
        const Eigen::Index rows = Eigen::Index(x.dim(0)), k = Eigen::Index(x.dim(1)), m = Eigen::Index(w.dim(1));
        Eigen::Map<const MatRM> gm(g.data().data(), rows, m);
        if (wants(0)) {
            Tensor gx(x.shape());
            Eigen::Map<MatRM>(gx.data().data(), rows, k).noalias() =
                gm * Eigen::Map<const MatRM>(w.data().data(), k, m).transpose();
            give(0, gx);
        }
        if (wants(1)) {
            Tensor gw(w.shape());
            Eigen::Map<MatRM>(gw.data().data(), k, m).noalias() =
                Eigen::Map<const MatRM>(x.data().data(), rows, k).transpose() * gm;
            give(1, gw);
        }
        if (wants(2)) {
            Tensor gb({w.dim(1)});
            Eigen::Map<Eigen::RowVectorXd>(gb.data().data(), m) = gm.colwise().sum();
            give(2, gb);
        }
        break;
    }
    case OpKind::dropout: {
        if (!wants(0)) break;
        if (n.cache.empty()) {
            give(0, g);
            break;
        }
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] *= n.cache[i];
        give(0, gx);
        break;
    }
    case OpKind::concat: {
        const std::size_t axis = std::get<AxisAttrs>(n.attrs).axis;
        const AxisSplit s = split_at(n.value.shape(), axis);
        std::size_t at = 0;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
            const Tensor& t = in(i);
            const std::size_t chunk = t.dim(axis) * s.inner;
            if (wants(i)) {
                Tensor gi(t.shape());
                for (std::size_t o = 0; o < s.outer; ++o)
                    std::copy_n(g.data().data() + o * s.n * s.inner + at, chunk, gi.data().data() + o * chunk);
                give(i, gi);
            }
            at += chunk;
        }
        break;
    }
    case OpKind::add:
        if (wants(0)) give(0, g);
        if (wants(1)) give(1, g);
        break;
    case OpKind::sub:
        if (wants(0)) give(0, g);
        if (wants(1)) {
            Tensor gb = g;
            for (double& v : gb.data()) v = -v;
            give(1, gb);
        }
        break;
    case OpKind::mul:
    case OpKind::div: {
        const Tensor& a = in(0);
        const Tensor& b = in(1);
        if (wants(0)) {
            Tensor ga = g;
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] = n.kind == OpKind::mul ? ga[i] * b[i] : ga[i] / b[i];
            give(0, ga);
        }
        if (wants(1)) {
            Tensor gb = g;
            for (std::size_t i = 0; i < gb.size(); ++i)
                gb[i] = n.kind == OpKind::mul ? gb[i] * a[i] : -gb[i] * a[i] / (b[i] * b[i]);
            give(1, gb);
        }
        break;
    }
    case OpKind::affine: {
        if (!wants(0)) break;
        Tensor gx = g;
        const double scale = std::get<AffineAttrs>(n.attrs).scale;
        for (double& v : gx.data()) v *= scale;
        give(0, gx);
        break;
    }
    case OpKind::log: {
        if (!wants(0)) break;
        Tensor gx = g;
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] /= in(0)[i];
        give(0, gx);
        break;
    }
    case OpKind::reduce_sum:
    case OpKind::reduce_mean: {
        if (!wants(0)) break;
        double v = g.item();
        if (n.kind == OpKind::reduce_mean) v /= double(in(0).size());
        give(0, Tensor(in(0).shape(), v));
        break;
    }
    case OpKind::bce_with_logits: {
        const Tensor& z = in(0);
        const Tensor& t = in(1);
        const double scale = g.item() / double(z.size());
        if (wants(0)) {
            Tensor gz(z.shape());
            for (std::size_t i = 0; i < z.size(); ++i) gz[i] = scale * (sigmoid_scalar(z[i]) - t[i]);
            give(0, gz);
        }
        if (wants(1)) {
            Tensor gt(t.shape());
            for (std::size_t i = 0; i < t.size(); ++i) gt[i] = -scale * z[i];
            give(1, gt);
        }
        break;
    }
    case OpKind::softmax_cross_entropy: {
        const Tensor& t = in(1);
        const std::size_t rows = t.dim(0), k = t.dim(1);
        const double scale = g.item() / double(rows);
        if (wants(0)) {
            Tensor gz(t.shape());
            for (std::size_t r = 0; r < rows; ++r) {
                double tsum = 0.0;
                for (std::size_t c = 0; c < k; ++c) tsum += t[r * k + c];
                for (std::size_t c = 0; c < k; ++c)
                    gz[r * k + c] = scale * (std::exp(n.cache[r * k + c]) * tsum - t[r * k + c]);
            }
            give(0, gz);
        }
        if (wants(1)) {
            Tensor gt(t.shape());
            for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = -scale * n.cache[i];
            give(1, gt);
        }
        break;
    }
    }
}

} // namespace lvdiag
