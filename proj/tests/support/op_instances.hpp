#pragma once

// Randomized small instances of every differentiable op kind, each reduced to a
// scalar through a fixed random projection so that every output element feeds
// the gradient.

#include "support/oracles.hpp"

#include <string>

namespace lvdiag::oracle {

struct OpInstance {
    std::string name;
    ScalarFn fn;
    std::vector<Tensor> leaves;
};

inline std::vector<OpKind> differentiable_kinds() {
    return {OpKind::conv3d,   OpKind::transposed_conv3d, OpKind::maxpool3d,   OpKind::relu,
            OpKind::sigmoid,  OpKind::softmax,           OpKind::dense,       OpKind::dropout,
            OpKind::concat,   OpKind::add,               OpKind::sub,         OpKind::mul,
            OpKind::div,      OpKind::affine,            OpKind::log,         OpKind::reduce_sum,
            OpKind::reduce_mean, OpKind::bce_with_logits, OpKind::softmax_cross_entropy};
}

namespace detail {

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

// Wraps an op so the scalar is sum(op(...) * projection).
inline ScalarFn projected(std::function<Var(Graph&, const std::vector<Var>&)> op, Tensor projection) {
    return [op = std::move(op), projection = std::move(projection)](Graph& g, const std::vector<Var>& v) {
        const Var y = op(g, v);
        return g.reduce_sum(g.mul(y, g.input(projection)));
    };
}

inline Shape projected_shape(const std::function<Var(Graph&, const std::vector<Var>&)>& op,
                             const std::vector<Tensor>& leaves) {
    Graph g;
    std::vector<Var> vs;
    for (const auto& t : leaves) vs.push_back(g.input(t));
    return g.value(op(g, vs)).shape();
}

inline OpInstance make_projected(std::string name, std::function<Var(Graph&, const std::vector<Var>&)> op,
                                 std::vector<Tensor> leaves, Rng& rng) {
    const Shape s = projected_shape(op, leaves);
    return {std::move(name), projected(std::move(op), random_tensor(rng, s)), std::move(leaves)};
}

} // namespace detail

/// `wide` selects row widths that route convolutions through the direct kernels.
inline OpInstance random_instance(OpKind kind, Rng& rng, bool wide = false) {
    using detail::pick;
    const std::string name(op_name(kind));
    switch (kind) {
    case OpKind::conv3d: {
        const std::size_t ci = pick(rng, 1, 2), co = pick(rng, 1, 2);
        Conv3dAttrs a;
        Shape xs{ci, pick(rng, 2, 4), pick(rng, 2, 4), wide ? 50 : pick(rng, 2, 4)};
        Shape ws{co, ci, 0, 0, 0};
        for (std::size_t ax = 0; ax < 3; ++ax) {
            a.padding[ax] = wide ? 1 : pick(rng, 0, 1);
            a.stride[ax] = wide ? 1 : pick(rng, 1, 2);
            ws[ax + 2] = wide ? 3 : pick(rng, 1, std::min<std::size_t>(3, xs[ax + 1] + 2 * a.padding[ax]));
        }
        auto op = [a](Graph& g, const std::vector<Var>& v) { return g.conv3d(v[0], v[1], v[2], a); };
        return detail::make_projected(name, op, {random_tensor(rng, xs), random_tensor(rng, ws), random_tensor(rng, {co})}, rng);
    }
    case OpKind::transposed_conv3d: {
        const std::size_t ci = pick(rng, 1, 2), co = pick(rng, 1, 2);
        Conv3dAttrs a;
        Shape xs{ci, pick(rng, 1, 3), pick(rng, 1, 3), wide ? 50 : pick(rng, 1, 3)};
        Shape ws{ci, co, 0, 0, 0};
        for (std::size_t ax = 0; ax < 3; ++ax) {
            a.stride[ax] = wide ? 1 : pick(rng, 1, 2);
            ws[ax + 2] = wide ? 3 : pick(rng, 1, 3);
            const std::size_t full = (xs[ax + 1] - 1) * a.stride[ax] + ws[ax + 2];
            a.padding[ax] = wide ? 1 : (full > 2 ? pick(rng, 0, 1) : 0);
        }
        auto op = [a](Graph& g, const std::vector<Var>& v) { return g.transposed_conv3d(v[0], v[1], v[2], a); };
        return detail::make_projected(name, op, {random_tensor(rng, xs), random_tensor(rng, ws), random_tensor(rng, {co})}, rng);
    }
    case OpKind::maxpool3d: {
        Pool3dAttrs a;
        Shape xs{pick(rng, 1, 2), pick(rng, 2, 4), pick(rng, 2, 4), pick(rng, 2, 4)};
        for (std::size_t ax = 0; ax < 3; ++ax) {
            a.kernel[ax] = pick(rng, 1, 2);
            a.stride[ax] = pick(rng, 1, 2);
        }
        // Well-separated distinct values keep the argmax stable under +-h.
        Tensor x(xs);
        std::vector<std::size_t> perm(x.size());
        for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        std::shuffle(perm.begin(), perm.end(), rng.engine());
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.1 * double(perm[i]) + rng.uniform(0.0, 0.01);
        auto op = [a](Graph& g, const std::vector<Var>& v) { return g.maxpool3d(v[0], a); };
        return detail::make_projected(name, op, {x}, rng);
    }
    case OpKind::relu: {
        auto op = [](Graph& g, const std::vector<Var>& v) { return g.relu(v[0]); };
        return detail::make_projected(name, op, {random_away_from_zero(rng, {pick(rng, 3, 10)})}, rng);
    }
    case OpKind::sigmoid: {
        auto op = [](Graph& g, const std::vector<Var>& v) { return g.sigmoid(v[0]); };
        return detail::make_projected(name, op, {random_tensor(rng, {pick(rng, 3, 10)}, -3, 3)}, rng);
    }
    case OpKind::softmax: {
        Shape s{pick(rng, 1, 3), pick(rng, 2, 4)};
        const std::size_t axis = rng.index(2);
        auto op = [axis](Graph& g, const std::vector<Var>& v) { return g.softmax(v[0], axis); };
        return detail::make_projected(name, op, {random_tensor(rng, s, -2, 2)}, rng);
    }
    case OpKind::dense: {
        const std::size_t n = pick(rng, 1, 3), in = pick(rng, 1, 4), out = pick(rng, 1, 3);
        auto op = [](Graph& g, const std::vector<Var>& v) { return g.dense(v[0], v[1], v[2]); };
        return detail::make_projected(name, op,
                                      {random_tensor(rng, {n, in}), random_tensor(rng, {in, out}), random_tensor(rng, {out})},
                                      rng);
    }
    case OpKind::dropout: {
        DropoutAttrs a{rng.uniform(0.3, 0.9), true, rng.engine()()};
        auto op = [a](Graph& g, const std::vector<Var>& v) { return g.dropout(v[0], a); };
        return detail::make_projected(name, op, {random_tensor(rng, {pick(rng, 3, 10)})}, rng);
    }
    case OpKind::concat: {
        const std::size_t parts = pick(rng, 2, 3), axis = rng.index(2);
        Shape base{pick(rng, 1, 3), pick(rng, 1, 3)};
        std::vector<Tensor> leaves;
        for (std::size_t i = 0; i < parts; ++i) {
            Shape s = base;
            s[axis] = pick(rng, 1, 3);
            leaves.push_back(random_tensor(rng, s));
        }
        auto op = [axis](Graph& g, const std::vector<Var>& v) { return g.concat(v, axis); };
        return detail::make_projected(name, op, std::move(leaves), rng);
    }
    case OpKind::add:
    case OpKind::sub:
    case OpKind::mul:
    case OpKind::div: {
        const Shape s{pick(rng, 3, 10)};
        Tensor b = random_tensor(rng, s);
        if (kind == OpKind::div)
            for (double& v : b.data()) v = (v < 0 ? -1.0 : 1.0) * (0.5 + std::abs(v));
        auto op = [kind](Graph& g, const std::vector<Var>& v) {
            const Var in[] = {v[0], v[1]};
            return g.apply(kind, in);
        };
        return detail::make_projected(name, op, {random_tensor(rng, s), b}, rng);
    }
    case OpKind::affine: {
        const double scale = rng.uniform(-2, 2), shift = rng.uniform(-1, 1);
        auto op = [scale, shift](Graph& g, const std::vector<Var>& v) { return g.affine(v[0], scale, shift); };
        return detail::make_projected(name, op, {random_tensor(rng, {pick(rng, 3, 10)})}, rng);
    }
    case OpKind::log: {
        auto op = [](Graph& g, const std::vector<Var>& v) { return g.log(v[0]); };
        return detail::make_projected(name, op, {random_tensor(rng, {pick(rng, 3, 10)}, 0.5, 2.0)}, rng);
    }
    case OpKind::reduce_sum:
    case OpKind::reduce_mean: {
        auto op = [kind](Graph& g, const std::vector<Var>& v) {
            const Var in[] = {v[0]};
            return g.apply(kind, in);
        };
        return detail::make_projected(name, op, {random_tensor(rng, {pick(rng, 3, 10)})}, rng);
    }
    case OpKind::bce_with_logits: {
        const Shape s{pick(rng, 3, 10)};
        Tensor t(s);
        for (double& v : t.data()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;
        return {name, [](Graph& g, const std::vector<Var>& v) { return g.bce_with_logits(v[0], v[1]); },
                {random_tensor(rng, s, -3, 3), t}};
    }
    case OpKind::softmax_cross_entropy: {
        const std::size_t n = pick(rng, 1, 4), k = pick(rng, 2, 3);
        Tensor t({n, k});
        for (std::size_t r = 0; r < n; ++r) t[r * k + rng.index(k)] = 1.0;
        return {name, [](Graph& g, const std::vector<Var>& v) { return g.softmax_cross_entropy(v[0], v[1]); },
                {random_tensor(rng, {n, k}, -2, 2), t}};
    }
    case OpKind::leaf:
        break;
    }
    throw std::invalid_argument("no random instance for " + name);
}

} // namespace lvdiag::oracle
