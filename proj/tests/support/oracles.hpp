#pragma once

// Independent reference implementations used only by tests. None of these
// call into the code paths they are used to check.

#include "lvdiag/tensor/graph.hpp"
#include "lvdiag/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace lvdiag::oracle {

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

/// Random values with |v| in [margin, 1], keeping finite differences off kinks.
inline Tensor random_away_from_zero(Rng& rng, Shape shape, double margin = 0.05) {
    Tensor t(std::move(shape));
    for (double& v : t.data()) {
        const double m = rng.uniform(margin, 1.0);
        v = rng.bernoulli(0.5) ? m : -m;
    }
    return t;
}

/// Nested-loop 3-D correlation: x (Ci,D,H,W), w (Co,Ci,KD,KH,KW), b (Co).
inline Tensor naive_conv3d(const Tensor& x, const Tensor& w, const Tensor& b, std::array<std::size_t, 3> stride,
                           std::array<std::size_t, 3> pad) {
    const long ci = long(x.dim(0)), D = long(x.dim(1)), H = long(x.dim(2)), W = long(x.dim(3));
    const long co = long(w.dim(0)), KD = long(w.dim(2)), KH = long(w.dim(3)), KW = long(w.dim(4));
    const long OD = (D + 2 * long(pad[0]) - KD) / long(stride[0]) + 1;
    const long OH = (H + 2 * long(pad[1]) - KH) / long(stride[1]) + 1;
    const long OW = (W + 2 * long(pad[2]) - KW) / long(stride[2]) + 1;
    Tensor out({std::size_t(co), std::size_t(OD), std::size_t(OH), std::size_t(OW)});
    for (long o = 0; o < co; ++o)
        for (long od = 0; od < OD; ++od)
            for (long oh = 0; oh < OH; ++oh)
                for (long ow = 0; ow < OW; ++ow) {
                    double s = b[std::size_t(o)];
                    for (long c = 0; c < ci; ++c)
                        for (long kd = 0; kd < KD; ++kd)
                            for (long kh = 0; kh < KH; ++kh)
                                for (long kw = 0; kw < KW; ++kw) {
                                    const long id = od * long(stride[0]) + kd - long(pad[0]);
                                    const long ih = oh * long(stride[1]) + kh - long(pad[1]);
                                    const long iw = ow * long(stride[2]) + kw - long(pad[2]);
                                    if (id < 0 || id >= D || ih < 0 || ih >= H || iw < 0 || iw >= W) continue;
                                    s += x[std::size_t(((c * D + id) * H + ih) * W + iw)] *
                                         w[std::size_t((((o * ci + c) * KD + kd) * KH + kh) * KW + kw)];
                                }
                    out[std::size_t(((o * OD + od) * OH + oh) * OW + ow)] = s;
                }
    return out;
}

/// Scatter form of the transposed convolution: w (Ci,Co,KD,KH,KW).
inline Tensor naive_transposed_conv3d(const Tensor& x, const Tensor& w, const Tensor& b,
                                      std::array<std::size_t, 3> stride, std::array<std::size_t, 3> pad) {
    const long ci = long(x.dim(0)), D = long(x.dim(1)), H = long(x.dim(2)), W = long(x.dim(3));
    const long co = long(w.dim(1)), KD = long(w.dim(2)), KH = long(w.dim(3)), KW = long(w.dim(4));
    const long OD = (D - 1) * long(stride[0]) + KD - 2 * long(pad[0]);
    const long OH = (H - 1) * long(stride[1]) + KH - 2 * long(pad[1]);
    const long OW = (W - 1) * long(stride[2]) + KW - 2 * long(pad[2]);
    Tensor out({std::size_t(co), std::size_t(OD), std::size_t(OH), std::size_t(OW)});
    for (long o = 0; o < co; ++o)
        for (std::size_t i = 0; i < std::size_t(OD * OH * OW); ++i) out[std::size_t(o * OD * OH * OW) + i] = b[std::size_t(o)];
    for (long c = 0; c < ci; ++c)
        for (long id = 0; id < D; ++id)
            for (long ih = 0; ih < H; ++ih)
                for (long iw = 0; iw < W; ++iw)
                    for (long o = 0; o < co; ++o)
                        for (long kd = 0; kd < KD; ++kd)
                            for (long kh = 0; kh < KH; ++kh)
                                for (long kw = 0; kw < KW; ++kw) {
                                    const long od = id * long(stride[0]) + kd - long(pad[0]);
                                    const long oh = ih * long(stride[1]) + kh - long(pad[1]);
                                    const long ow = iw * long(stride[2]) + kw - long(pad[2]);
                                    if (od < 0 || od >= OD || oh < 0 || oh >= OH || ow < 0 || ow >= OW) continue;
                                    out[std::size_t(((o * OD + od) * OH + oh) * OW + ow)] +=
                                        x[std::size_t(((c * D + id) * H + ih) * W + iw)] *
                                        w[std::size_t((((c * co + o) * KD + kd) * KH + kh) * KW + kw)];
                                }
    return out;
}

/// Builds a scalar from the leaves; called repeatedly on fresh graphs.
using ScalarFn = std::function<Var(Graph&, const std::vector<Var>&)>;

/// Max over leaves of ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2), with central
/// differences of step h. Returns 0 when both gradients vanish.
inline double gradcheck(const ScalarFn& f, std::vector<Tensor> leaves, double h = 1e-5) {
    Graph g;
    std::vector<Var> vars;
    for (const Tensor& t : leaves) vars.push_back(g.parameter(t));
    const Var out = f(g, vars);
    const Gradients grads = g.backward(out);

    auto eval = [&](const std::vector<Tensor>& ls) {
        Graph gg;
        std::vector<Var> vs;
        for (const Tensor& t : ls) vs.push_back(gg.input(t));
        return gg.value(f(gg, vs)).item();
    };

    double worst = 0.0;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        const Tensor analytic = grads.of(vars[li]);
        double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
        for (std::size_t i = 0; i < leaves[li].size(); ++i) {
            const double orig = leaves[li][i];
            leaves[li][i] = orig + h;
            const double fp = eval(leaves);
            leaves[li][i] = orig - h;
            const double fm = eval(leaves);
            leaves[li][i] = orig;
            const double num = (fp - fm) / (2.0 * h);
            diff2 += (analytic[i] - num) * (analytic[i] - num);
            a2 += analytic[i] * analytic[i];
            n2 += num * num;
        }
        const double scale = std::sqrt(std::max(a2, n2));
        if (scale == 0.0) continue;
        worst = std::max(worst, std::sqrt(diff2) / scale);
    }
    return worst;
}

} // namespace lvdiag::oracle
