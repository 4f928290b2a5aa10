#include "lvdiag/featsel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace lvdiag::featsel {

KernelWeights kernel_weights(const segnet::SegNetParams& net, const Tensor& video, CamClass target,
                             CamNormalization norm) {
    if (!net.all_finite()) throw std::invalid_argument("kernel_weights: network has non-finite parameters");
    Tensor features;
    std::vector<Tensor> skips;
    {
        Graph g;
        const segnet::BoundParams bp = segnet::bind(g, net, false);
        const segnet::Encoded e = segnet::encode(g, net, bp, g.input(segnet::prepare_input(net.arch, video)));
        features = g.value(e.bottleneck);
        for (const Var s : e.skips) skips.push_back(g.value(s));
    }

    Graph g;
    const segnet::BoundParams bp = segnet::bind(g, net, false);
    segnet::Encoded e;
    for (Tensor& s : skips) e.skips.push_back(g.input(std::move(s)));
    e.bottleneck = g.parameter(features);
    Var y = g.reduce_sum(g.sigmoid(segnet::decode(g, net, bp, e)));
    if (target == CamClass::background) y = g.affine(y, -1.0, double(video.size()));
    const Tensor grad = g.backward(y).of(e.bottleneck);

    const std::size_t channels = features.dim(0), positions = features.size() / channels;
    const double divisor = norm == CamNormalization::positions ? double(positions) : double(channels);
    KernelWeights w;
    w.target = target;
    w.alpha.resize(channels);
    for (std::size_t c = 0; c < channels; ++c) {
        double s = 0.0;
        for (std::size_t i = 0; i < positions; ++i) s += grad[c * positions + i];
        w.alpha[c] = s / divisor;
    }
    return w;
}

Tensor gradcam_map(const Tensor& features, const KernelWeights& weights) {
    if (features.rank() < 2 || features.dim(0) != weights.alpha.size())
        throw ShapeError("gradcam_map: features " + shape_str(features.shape()) + " vs " +
                         std::to_string(weights.alpha.size()) + " kernel weights");
    const std::size_t channels = features.dim(0), positions = features.size() / channels;
    Shape out_shape(features.shape().begin() + 1, features.shape().end());
    Tensor map(out_shape);
    for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < positions; ++i) map[i] += weights.alpha[c] * features[c * positions + i];
    for (double& v : map.data()) v = std::max(v, 0.0);
    return map;
}

Tensor upsample_nearest(const Tensor& map, const Shape& shape) {
    if (map.rank() != 3 || shape.size() != 3) throw ShapeError("upsample_nearest: expected rank-3 map and shape");
    for (std::size_t ax = 0; ax < 3; ++ax)
        if (shape[ax] % map.dim(ax) != 0)
            throw ShapeError("upsample_nearest: " + shape_str(shape) + " is not a multiple of " + shape_str(map.shape()));
    Tensor out(shape);
    const std::size_t ft = shape[0] / map.dim(0), fh = shape[1] / map.dim(1), fw = shape[2] / map.dim(2);
    for (std::size_t t = 0; t < shape[0]; ++t)
        for (std::size_t h = 0; h < shape[1]; ++h)
            for (std::size_t w = 0; w < shape[2]; ++w)
                out[(t * shape[1] + h) * shape[2] + w] = map.at({t / ft, h / fh, w / fw});
    return out;
}

std::vector<std::size_t> top_k(const std::vector<double>& values, std::size_t k) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t(0));
    k = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + std::ptrdiff_t(k), idx.end(), [&](std::size_t a, std::size_t b) {
        return values[a] > values[b] || (values[a] == values[b] && a < b);
    });
    idx.resize(k);
    return idx;
}

SelectionResult fsr_select(const std::vector<KernelWeights>& per_case) {
    if (per_case.empty()) throw std::invalid_argument("fsr_select: no cases");
    const std::size_t kernels = per_case.front().alpha.size();
    if (kernels < 5) throw std::invalid_argument("fsr_select: fewer than 5 kernels");
    std::vector<std::size_t> count(kernels, 0), rank_sum(kernels, 0);
    for (const KernelWeights& w : per_case) {
        if (w.alpha.size() != kernels) throw std::invalid_argument("fsr_select: kernel counts differ across cases");
        const auto top = top_k(w.alpha, 5);
        for (std::size_t r = 0; r < top.size(); ++r) {
            ++count[top[r]];
            rank_sum[top[r]] += r;
        }
    }
    std::vector<std::size_t> order(kernels);
    std::iota(order.begin(), order.end(), std::size_t(0));
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (count[a] != count[b]) return count[a] > count[b];
        return count[a] > 0 && rank_sum[a] < rank_sum[b];
    });
    SelectionResult r;
    r.method = Method::fsr;
    r.universe = kernels;
    r.indices.assign(order.begin(), order.begin() + 3);
    std::sort(r.indices.begin(), r.indices.end());
    r.reduction_ratio = 1.0 - 3.0 / double(kernels);
    return r;
}

void write_pgm(const std::filesystem::path& path, const Tensor& map) {
    if (map.rank() != 2) throw ShapeError("write_pgm: expected (H,W), got " + shape_str(map.shape()));
    const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
    const double range = *hi - *lo;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_pgm: cannot write " + path.string());
    os << "P5\n" << map.dim(1) << ' ' << map.dim(0) << "\n255\n";
    for (double v : map.data()) {
        const double s = range > 0.0 ? (v - *lo) / range : 0.0;
        os.put(char(static_cast<unsigned char>(std::lround(255.0 * s))));
    }
    if (!os) throw std::runtime_error("write_pgm: write failed for " + path.string());
}

} // namespace lvdiag::featsel
