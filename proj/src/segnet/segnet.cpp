#include "lvdiag/segnet.hpp"

#include "lvdiag/rng.hpp"
#include "lvdiag/tensor/adam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace lvdiag::segnet {
namespace {

constexpr double kDiceSmooth = 1.0;

std::size_t enc_index(std::size_t level) { return 4 * level; }

std::size_t dec_index(const Architecture& a, std::size_t level) {
    return 4 * a.levels + 6 * (a.levels - 2 - level);
}

std::size_t head_index(const Architecture& a) { return 4 * a.levels + 6 * (a.levels - 1); }

Tensor he_uniform(Rng& rng, Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / double(fan_in));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
    return t;
}

Var conv_relu(Graph& g, Var x, Var w, Var b) {
    Conv3dAttrs same;
    same.padding = {1, 1, 1};
    return g.relu(g.conv3d(x, w, b, same));
}

void check_video(const Tensor& v, const char* what) {
    if (v.rank() != 3) throw ShapeError(std::string(what) + ": expected (T,H,W), got " + shape_str(v.shape()));
}

void check_trained_shape(const SegNetParams& p, const Tensor& video, const char* what) {
    check_video(video, what);
    if (!p.input_shape.empty() && video.shape() != p.input_shape)
        throw ShapeError(std::string(what) + ": video " + shape_str(video.shape()) + " does not match training shape " +
                         shape_str(p.input_shape));
}

// Loss of one case; records the graph and returns the scalar node.
Var case_loss(Graph& g, const SegNetParams& params, const BoundParams& bp, const Tensor& input, const Tensor& mask,
              double dice_weight) {
    const Var x = g.input(input);
    const Var logits = decode(g, params, bp, encode(g, params, bp, x));
    const Var target = g.input(mask.reshaped(input.shape()));
    const Var prob = g.sigmoid(logits);
    const Var inter = g.reduce_sum(g.mul(prob, target));
    const Var psum = g.reduce_sum(prob);
    const double tsum = mask.sum();
    const Var soft_dice = g.div(g.affine(inter, 2.0, kDiceSmooth), g.affine(psum, 1.0, tsum + kDiceSmooth));
    const Var bce = g.bce_with_logits(logits, target);
    return g.add(g.affine(soft_dice, -dice_weight, dice_weight), g.affine(bce, 1.0 - dice_weight, 0.0));
}

} // namespace

void Architecture::validate() const {
    if (levels < 1 || levels > 8) throw std::invalid_argument("segnet: levels must be in [1,8]");
    if (base_channels == 0 || channels(levels - 1) != kBottleneckChannels)
        throw std::invalid_argument("segnet: base_channels * 2^(levels-1) = " +
                                    std::to_string(base_channels * (std::size_t(1) << (levels - 1))) +
                                    ", bottleneck must have 32 channels");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("segnet train: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("segnet train: batch_size must be >= 1");
    if (!(augment_amplitude >= 0.0)) throw std::invalid_argument("segnet train: augmentation amplitude must be >= 0");
    if (!(dice_weight >= 0.0 && dice_weight <= 1.0)) throw std::invalid_argument("segnet train: dice weight outside [0,1]");
    if (!(lr0 >= 0.0)) throw std::invalid_argument("segnet train: lr0 must be >= 0");
    if (!(decay >= 0.0)) throw std::invalid_argument("segnet train: decay must be >= 0");
}

const Tensor& SegNetParams::get(const std::string& name) const {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw std::out_of_range("segnet: no parameter " + name);
    return tensors[std::size_t(it - names.begin())];
}

Tensor& SegNetParams::get(const std::string& name) {
    return const_cast<Tensor&>(std::as_const(*this).get(name));
}

bool SegNetParams::all_finite() const {
    return std::all_of(tensors.begin(), tensors.end(), [](const Tensor& t) { return t.all_finite(); });
}

SegNetParams build(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    SegNetParams p;
    p.arch = arch;
    p.seed = seed;
    Rng rng(derive_seed(seed, 0xB01D));
    auto add = [&](std::string name, Tensor t) {
        p.names.push_back(std::move(name));
        p.tensors.push_back(std::move(t));
    };
    auto conv = [&](const std::string& prefix, std::size_t ci, std::size_t co, std::size_t k) {
        add(prefix + ".w", he_uniform(rng, {co, ci, k, k, k}, ci * k * k * k));
        add(prefix + ".b", Tensor::zeros({co}));
    };
    for (std::size_t l = 0; l < arch.levels; ++l) {
        const std::size_t in = l == 0 ? 1 : arch.channels(l - 1);
        conv("enc" + std::to_string(l) + ".conv1", in, arch.channels(l), 3);
        conv("enc" + std::to_string(l) + ".conv2", arch.channels(l), arch.channels(l), 3);
    }
    for (std::size_t l = arch.levels - 1; l-- > 0;) {
        const std::string prefix = "dec" + std::to_string(l);
        const std::size_t c = arch.channels(l), deeper = arch.channels(l + 1);
        add(prefix + ".up.w", he_uniform(rng, {deeper, c, 2, 2, 2}, deeper));
        add(prefix + ".up.b", Tensor::zeros({c}));
        conv(prefix + ".conv1", 2 * c, c, 3);
        conv(prefix + ".conv2", c, c, 3);
    }
    conv("head", arch.channels(0), 1, 1);
    return p;
}

BoundParams bind(Graph& g, const SegNetParams& params, bool trainable) {
    BoundParams b;
    b.vars.reserve(params.tensors.size());
    for (const Tensor& t : params.tensors) b.vars.push_back(trainable ? g.parameter(t) : g.input(t));
    return b;
}

Encoded encode(Graph& g, const SegNetParams& params, const BoundParams& p, Var x) {
    const Architecture& a = params.arch;
    Encoded e;
    Var h = x;
    for (std::size_t l = 0; l < a.levels; ++l) {
        if (l > 0) h = g.maxpool3d(h);
        const std::size_t i = enc_index(l);
        h = conv_relu(g, h, p.vars[i], p.vars[i + 1]);
        h = conv_relu(g, h, p.vars[i + 2], p.vars[i + 3]);
        if (l + 1 < a.levels) e.skips.push_back(h);
    }
    e.bottleneck = h;
    return e;
}

Var decode(Graph& g, const SegNetParams& params, const BoundParams& p, const Encoded& e) {
    const Architecture& a = params.arch;
    Conv3dAttrs up;
    up.stride = {2, 2, 2};
    Var h = e.bottleneck;
    for (std::size_t l = a.levels - 1; l-- > 0;) {
        const std::size_t i = dec_index(a, l);
        h = g.relu(g.transposed_conv3d(h, p.vars[i], p.vars[i + 1], up));
        const Var both[] = {h, e.skips[l]};
        h = g.concat(both, 0);
        h = conv_relu(g, h, p.vars[i + 2], p.vars[i + 3]);
        h = conv_relu(g, h, p.vars[i + 4], p.vars[i + 5]);
    }
    const std::size_t i = head_index(a);
    return g.conv3d(h, p.vars[i], p.vars[i + 1]);
}

Tensor normalize(const Tensor& video) {
    const double n = double(video.size());
    const double mean = video.sum() / n;
    double ss = 0.0;
    for (double v : video.data()) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / n);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
        throw std::invalid_argument("normalize: constant video has zero variance");
    Tensor out = video;
    for (double& v : out.data()) v = (v - mean) / sd;
    return out;
}

Tensor augment(const Tensor& video, double amplitude, std::uint64_t seed) {
    if (!(amplitude >= 0.0)) throw std::invalid_argument("augment: amplitude must be >= 0");
    if (amplitude == 0.0) return video;
    Tensor out = video;
    Rng rng(seed);
    for (double& v : out.data()) v += rng.uniform(-amplitude, amplitude);
    return out;
}

Tensor prepare_input(const Architecture& arch, const Tensor& video) {
    check_video(video, "segnet");
    for (std::size_t ax = 0; ax < 3; ++ax)
        if (video.dim(ax) % arch.stride() != 0)
            throw ShapeError("segnet: video " + shape_str(video.shape()) + " not divisible by encoder stride " +
                             std::to_string(arch.stride()));
    const Shape batched{1, video.dim(0), video.dim(1), video.dim(2)};
    const auto [lo, hi] = std::minmax_element(video.data().begin(), video.data().end());
    if (*lo == *hi) return Tensor(batched, 0.0);
    return normalize(video).reshaped(batched);
}

TrainResult train(const std::vector<Tensor>& videos, const std::vector<Tensor>& masks, SegNetParams params,
                  const TrainConfig& cfg, const std::function<void(std::size_t, double)>& progress) {
    cfg.validate();
    params.arch.validate();
    if (videos.empty()) throw std::invalid_argument("segnet train: empty dataset");
    if (videos.size() != masks.size()) throw std::invalid_argument("segnet train: video and mask counts differ");
    for (std::size_t i = 0; i < videos.size(); ++i) {
        check_video(videos[i], "segnet train");
        if (videos[i].shape() != videos[0].shape() || masks[i].shape() != videos[0].shape())
            throw ShapeError("segnet train: case " + std::to_string(i) + " video " + shape_str(videos[i].shape()) +
                             " / mask " + shape_str(masks[i].shape()) + " differ from " + shape_str(videos[0].shape()));
        for (double m : masks[i].data())
            if (m != 0.0 && m != 1.0) throw std::invalid_argument("segnet train: mask " + std::to_string(i) + " not binary");
    }

    std::vector<Tensor> inputs;
    inputs.reserve(videos.size());
    for (const Tensor& v : videos) inputs.push_back(prepare_input(params.arch, v));

    AdamState adam = AdamState::for_params(params.tensors);
    TrainResult result;
    std::vector<std::size_t> order(videos.size());
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t(0));
        Rng shuffle_rng(derive_seed(cfg.seed, 0x5AFF, epoch));
        std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
        const double lr = cfg.lr0 == 0.0 ? 0.0 : lr_schedule(epoch, cfg.lr0, cfg.decay);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            std::vector<Tensor> grad_sum;
            for (std::size_t k = start; k < stop; ++k) {
                const std::size_t c = order[k];
                const Tensor x = augment(inputs[c], cfg.augment_amplitude, derive_seed(cfg.seed, epoch, c));
                Graph g;
                const BoundParams bp = bind(g, params, true);
                const Var loss = case_loss(g, params, bp, x, masks[c], cfg.dice_weight);
                const double value = g.value(loss).item();
                if (!std::isfinite(value))
                    throw TrainingDiverged(epoch, "segnet train: non-finite loss at epoch " + std::to_string(epoch) +
                                                      " (case " + std::to_string(c) + ")");
                epoch_loss += value;
                const Gradients grads = g.backward(loss);
                if (grad_sum.empty()) {
                    for (const Var v : bp.vars) grad_sum.push_back(grads.of(v));
                } else {
                    for (std::size_t i = 0; i < bp.vars.size(); ++i)
                        if (const Tensor* gi = grads.find(bp.vars[i]))
                            for (std::size_t j = 0; j < gi->size(); ++j) grad_sum[i][j] += (*gi)[j];
                }
            }
            const double scale = 1.0 / double(stop - start);
            for (Tensor& t : grad_sum)
                for (double& v : t.data()) v *= scale;
            if (lr > 0.0) adam_step(params.tensors, grad_sum, adam, lr);
        }
        epoch_loss /= double(order.size());
        result.loss_history.push_back(epoch_loss);
        if (!params.all_finite())
            throw TrainingDiverged(epoch, "segnet train: non-finite parameters after epoch " + std::to_string(epoch));
        if (progress) progress(epoch, epoch_loss);
    }
    params.epoch += cfg.epochs;
    params.input_shape = videos[0].shape();
    result.params = std::move(params);
    return result;
}

Tensor segment(const SegNetParams& params, const Tensor& video) {
    check_trained_shape(params, video, "segment");
    Graph g;
    const BoundParams bp = bind(g, params, false);
    const Var x = g.input(prepare_input(params.arch, video));
    const Var prob = g.sigmoid(decode(g, params, bp, encode(g, params, bp, x)));
    return g.value(prob).reshaped(video.shape());
}

Tensor extract_bottleneck(const SegNetParams& params, const Tensor& video) {
    check_trained_shape(params, video, "extract_bottleneck");
    Graph g;
    const BoundParams bp = bind(g, params, false);
    const Var x = g.input(prepare_input(params.arch, video));
    return g.value(encode(g, params, bp, x).bottleneck);
}

Tensor binarize(const Tensor& probability) {
    Tensor out = probability;
    for (double& v : out.data()) v = v >= 0.5 ? 1.0 : 0.0;
    return out;
}

double dice(const Tensor& pred_binary, const Tensor& truth) {
    if (pred_binary.shape() != truth.shape())
        throw ShapeError("dice: " + shape_str(pred_binary.shape()) + " vs " + shape_str(truth.shape()));
    double inter = 0.0, a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool p = pred_binary[i] > 0.5, t = truth[i] > 0.5;
        inter += double(p && t);
        a += double(p);
        b += double(t);
    }
    return a + b == 0.0 ? 1.0 : 2.0 * inter / (a + b);
}

} // namespace lvdiag::segnet
