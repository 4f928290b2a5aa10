#pragma once

#include "lvdiag/tensor/graph.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lvdiag::segnet {

inline constexpr std::size_t kBottleneckChannels = 32;

/// Encoder-decoder with `levels` resolution levels; level l has base_channels * 2^l
/// channels and the deepest level is the bottleneck.
struct Architecture {
    std::size_t levels = 3;
    std::size_t base_channels = 8;

    std::size_t channels(std::size_t level) const { return base_channels << level; }
    /// Total downsampling factor of the encoder along every axis.
    std::size_t stride() const { return std::size_t(1) << (levels - 1); }
    /// Throws std::invalid_argument unless the bottleneck has 32 channels.
    void validate() const;
};

/// Parameter tensors in a fixed order, with stable names for checkpoints.
/// Order: per encoder level l (incl. bottleneck) enc{l}.conv{1,2}.{w,b}; per
/// decoder level l = levels-2 .. 0 dec{l}.up.{w,b}, dec{l}.conv{1,2}.{w,b};
/// then head.{w,b}.
struct SegNetParams {
    Architecture arch;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    Shape input_shape;  ///< (T,H,W) seen in training; empty before training
    std::vector<std::string> names;
    std::vector<Tensor> tensors;

    const Tensor& get(const std::string& name) const;
    Tensor& get(const std::string& name);
    bool all_finite() const;
};

struct TrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 4;
    double lr0 = 1e-3;
    double decay = 0.05;
    double augment_amplitude = 0.1;
    double dice_weight = 0.5;
    std::uint64_t seed = 7;

    void validate() const;
};

struct TrainResult {
    SegNetParams params;
    std::vector<double> loss_history;  ///< mean per-case loss of each epoch
};

/// Non-finite loss during training; `epoch` is zero-based.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t epoch, const std::string& what)
        : std::runtime_error(what), epoch(epoch) {}
    std::size_t epoch;
};

/// Fan-in scaled uniform (He) weights, zero biases.
SegNetParams build(const Architecture& arch, std::uint64_t seed);

/// (x - mean) / std over the whole case; throws std::invalid_argument on zero variance.
Tensor normalize(const Tensor& video);

/// video + u, u ~ U(-amplitude, amplitude) i.i.d. per voxel.
Tensor augment(const Tensor& video, double amplitude, std::uint64_t seed);

/// Videos and masks are (T,H,W); every dimension must be divisible by arch.stride().
/// `progress` (optional) is called after each epoch with (epoch, loss).
TrainResult train(const std::vector<Tensor>& videos, const std::vector<Tensor>& masks, SegNetParams params,
                  const TrainConfig& cfg, const std::function<void(std::size_t, double)>& progress = {});

/// Foreground probability per voxel, (T,H,W). The video is normalized internally
/// and must match params.input_shape once the net is trained.
Tensor segment(const SegNetParams& params, const Tensor& video);

/// Bottleneck activations (32, T/s, H/s, W/s) for s = arch.stride().
Tensor extract_bottleneck(const SegNetParams& params, const Tensor& video);

/// 2|A∩B| / (|A|+|B|) on binary masks; 1 when both are empty.
double dice(const Tensor& pred_binary, const Tensor& truth);

/// Voxels >= 0.5 become 1, the rest 0.
Tensor binarize(const Tensor& probability);

void save_checkpoint(const std::filesystem::path& dir, const SegNetParams& params);
SegNetParams load_checkpoint(const std::filesystem::path& dir);

/// Graph-level pieces of the network, for callers that need gradients with
/// respect to intermediate activations.
struct BoundParams {
    std::vector<Var> vars;
};

struct Encoded {
    std::vector<Var> skips;  ///< per encoder level above the bottleneck
    Var bottleneck;
};

BoundParams bind(Graph& g, const SegNetParams& params, bool trainable);
/// x is (1,T,H,W).
Encoded encode(Graph& g, const SegNetParams& params, const BoundParams& p, Var x);
/// Returns logits (1,T,H,W).
Var decode(Graph& g, const SegNetParams& params, const BoundParams& p, const Encoded& e);

/// Checks shape divisibility; returns the (1,T,H,W) normalized input. A constant
/// video maps to zeros.
Tensor prepare_input(const Architecture& arch, const Tensor& video);

} // namespace lvdiag::segnet
