#include "lvdiag/phantom.hpp"
#include "lvdiag/rng.hpp"
#include "lvdiag/segnet.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lvdiag;
using namespace lvdiag::segnet;

namespace {

struct Moments {
    double mean, sd;
};

Moments moments(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v;
    const double mean = s / double(t.size());
    double ss = 0.0;
    for (double v : t.data()) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / double(t.size()))};
}

struct SmallData {
    std::vector<Tensor> videos, masks;
};

SmallData small_phantoms(std::size_t n, std::size_t frames, std::size_t side, std::uint64_t seed = 2024) {
    phantom::PhantomConfig cfg;
    cfg.frames = frames;
    cfg.height = cfg.width = side;
    cfg.seed = seed;
    SmallData d;
    for (auto& c : phantom::generate_dataset(cfg, n)) {
        d.videos.push_back(c.video);
        d.masks.push_back(c.mask);
    }
    return d;
}

} // namespace

TEST(SegNetBuild, DefaultLadderEndsAtThirtyTwo) {
    const SegNetParams p = build({}, 1);
    EXPECT_EQ(p.get("enc0.conv2.w").dim(0), 8u);
    EXPECT_EQ(p.get("enc1.conv2.w").dim(0), 16u);
    EXPECT_EQ(p.get("enc2.conv2.w").dim(0), 32u);
    EXPECT_EQ(p.get("dec1.conv2.w").dim(0), 16u);
    EXPECT_EQ(p.get("dec0.conv2.w").dim(0), 8u);
    EXPECT_EQ(p.get("head.w").shape(), (Shape{1, 8, 1, 1, 1}));
    EXPECT_TRUE(p.all_finite());
    for (std::size_t i = 0; i < p.names.size(); ++i)
        if (p.names[i].ends_with(".b")) {
            EXPECT_EQ(p.tensors[i], Tensor::zeros(p.tensors[i].shape()));
        }
}

TEST(SegNetBuild, SingleLevelAndRejectedLadder) {
    const SegNetParams one = build({1, 32}, 1);
    EXPECT_EQ(one.get("enc0.conv2.w").dim(0), 32u);
    EXPECT_EQ(one.names.size(), 6u);
    EXPECT_THROW(build({3, 16}, 1), std::invalid_argument);
    EXPECT_THROW(build({2, 8}, 1), std::invalid_argument);
}

TEST(SegNetBuild, InitIsSeededAndFanInScaled) {
    EXPECT_EQ(build({}, 3).tensors, build({}, 3).tensors);
    EXPECT_NE(build({}, 3).tensors, build({}, 4).tensors);
    const Tensor& w = build({}, 3).get("enc1.conv1.w");
    const double bound = std::sqrt(6.0 / (8.0 * 27.0));
    for (double v : w.data()) EXPECT_LE(std::abs(v), bound);
}

TEST(Normalize, MomentsByRecomputation) {
    const Tensor v = phantom::generate_case({}, 11, phantom::Label::tts).video;
    const Moments m = moments(normalize(v));
    EXPECT_NEAR(m.mean, 0.0, 1e-9);
    EXPECT_NEAR(m.sd, 1.0, 1e-9);
}

TEST(Normalize, FixedPointAffineInvarianceIdempotence) {
    Rng rng(5);
    const Tensor x = normalize(oracle::random_tensor(rng, {4, 8, 8}));
    const Tensor again = normalize(x);
    Tensor shifted = x;
    for (double& v : shifted.data()) v = 2.0 * v + 5.0;
    const Tensor back = normalize(shifted);
    for (std::size_t i = 0; i < x.size(); ++i) {
        EXPECT_NEAR(again[i], x[i], 1e-12);
        EXPECT_NEAR(back[i], x[i], 1e-12);
    }
    EXPECT_THROW(normalize(Tensor({4, 8, 8}, 0.3)), std::invalid_argument);
}

TEST(Augment, BoundsMeanAndDeterminism) {
    const Tensor v({16, 64, 64}, 0.25);
    EXPECT_EQ(augment(v, 0.0, 1), v);
    const Tensor a = augment(v, 0.1, 77);
    double mean = 0.0, worst = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        mean += a[i] - v[i];
        worst = std::max(worst, std::abs(a[i] - v[i]));
    }
    EXPECT_LE(worst, 0.1);
    EXPECT_NEAR(mean / double(v.size()), 0.0, 0.005);
    EXPECT_EQ(augment(v, 0.1, 77), a);
    EXPECT_NE(augment(v, 0.1, 78), a);
    EXPECT_THROW(augment(v, -0.1, 1), std::invalid_argument);
}

TEST(Dice, DefinitionExamples) {
    Tensor a({10, 20}), b({10, 20});
    EXPECT_EQ(dice(a, b), 1.0);
    for (std::size_t i = 0; i < 100; ++i) a[i] = 1.0;
    EXPECT_EQ(dice(a, a), 1.0);
    for (std::size_t i = 100; i < 200; ++i) b[i] = 1.0;
    EXPECT_EQ(dice(a, b), 0.0);
    Tensor c({10, 20});
    for (std::size_t i = 50; i < 150; ++i) c[i] = 1.0;
    EXPECT_DOUBLE_EQ(dice(a, c), 0.5);
    EXPECT_THROW(dice(a, Tensor({200})), ShapeError);
}

TEST(Segment, RangeFiniteAndShapeChecks) {
    const SegNetParams p = build({}, 9);
    const Tensor v = phantom::generate_case({}, 2, phantom::Label::stemi).video;
    const Tensor prob = segment(p, v);
    EXPECT_EQ(prob.shape(), v.shape());
    for (double x : prob.data()) {
        EXPECT_GE(x, 0.0);
        EXPECT_LE(x, 1.0);
    }
    EXPECT_TRUE(segment(p, Tensor({16, 64, 64}, 0.0)).all_finite());
    EXPECT_THROW(segment(p, Tensor({15, 64, 64}, 0.0)), ShapeError);
    SegNetParams trained = p;
    trained.input_shape = {16, 64, 64};
    EXPECT_THROW(segment(trained, Tensor({16, 32, 32}, 0.0)), ShapeError);
    EXPECT_THROW(extract_bottleneck(trained, Tensor({8, 64, 64}, 0.0)), ShapeError);
}

TEST(ExtractBottleneck, ShapeDeterminismZeroWeights) {
    const Tensor v = phantom::generate_case({}, 2, phantom::Label::tts).video;
    for (const Architecture arch : {Architecture{3, 8}, Architecture{2, 16}, Architecture{1, 32}}) {
        const SegNetParams p = build(arch, 1);
        const Tensor f = extract_bottleneck(p, v);
        const std::size_t s = arch.stride();
        EXPECT_EQ(f.shape(), (Shape{32, 16 / s, 64 / s, 64 / s}));
        EXPECT_EQ(extract_bottleneck(p, Tensor(v)), f);
    }
    SegNetParams zero = build({}, 1);
    for (Tensor& t : zero.tensors) t = Tensor::zeros(t.shape());
    EXPECT_EQ(extract_bottleneck(zero, v), Tensor::zeros({32, 4, 16, 16}));
}

TEST(SegNetTrain, ZeroLearningRateKeepsParameters) {
    const SmallData d = small_phantoms(8, 8, 16);
    const SegNetParams p = build({}, 4);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.lr0 = 0.0;
    const TrainResult r = train(d.videos, d.masks, p, cfg);
    EXPECT_EQ(r.params.tensors, p.tensors);
    EXPECT_EQ(r.loss_history.size(), 1u);
    EXPECT_EQ(r.params.input_shape, (Shape{8, 16, 16}));
}

TEST(SegNetTrain, LossHistoryReproducible) {
    const SmallData d = small_phantoms(8, 8, 16);
    TrainConfig cfg;
    cfg.epochs = 3;
    const TrainResult a = train(d.videos, d.masks, build({}, 4), cfg);
    const TrainResult b = train(d.videos, d.masks, build({}, 4), cfg);
    EXPECT_EQ(a.loss_history, b.loss_history);
    EXPECT_EQ(a.params.tensors, b.params.tensors);
    cfg.seed = 8;
    EXPECT_NE(train(d.videos, d.masks, build({}, 4), cfg).loss_history, a.loss_history);
}

TEST(SegNetTrain, FiveEpochWindowsDecreaseForMostSeeds) {
    const SmallData d = small_phantoms(8, 8, 16);
    std::size_t good = 0;
    const std::size_t seeds = 10;
    for (std::uint64_t s = 0; s < seeds; ++s) {
        TrainConfig cfg;
        cfg.epochs = 12;
        cfg.seed = s;
        const auto h = train(d.videos, d.masks, build({}, 100 + s), cfg).loss_history;
        bool ok = true;
        for (std::size_t e = 0; e + 5 < h.size(); ++e) ok = ok && h[e + 5] < h[e];
        good += ok;
        if (!ok) std::printf("seed %llu: windowed decrease failed\n", static_cast<unsigned long long>(s));
    }
    EXPECT_GE(double(good) / double(seeds), 0.9);
}

TEST(SegNetTrain, RejectsBadInputsAndReportsDivergence) {
    const SmallData d = small_phantoms(8, 8, 16);
    TrainConfig cfg;
    cfg.epochs = 0;
    EXPECT_THROW(train(d.videos, d.masks, build({}, 1), cfg), std::invalid_argument);
    cfg.epochs = 2;
    std::vector<Tensor> wrong = d.masks;
    wrong[3] = Tensor({8, 16, 8});
    EXPECT_THROW(train(d.videos, wrong, build({}, 1), cfg), ShapeError);
    SegNetParams poisoned = build({}, 1);
    poisoned.get("head.b")[0] = std::nan("");
    try {
        train(d.videos, d.masks, poisoned, cfg);
        FAIL() << "expected divergence";
    } catch (const TrainingDiverged& e) {
        EXPECT_EQ(e.epoch, 0u);
    }
}

TEST(SegNetTrain, EightPhantomsFortyEpochsFitTrainingSet) {
    phantom::PhantomConfig pc;
    std::vector<Tensor> videos, masks;
    for (auto& c : phantom::generate_dataset(pc, 8)) {
        videos.push_back(c.video);
        masks.push_back(c.mask);
    }
    const TrainResult r = train(videos, masks, build({}, 1), TrainConfig{});
    EXPECT_LT(r.loss_history.back(), r.loss_history.front());
    double mean = 0.0;
    for (std::size_t i = 0; i < videos.size(); ++i) mean += dice(binarize(segment(r.params, videos[i])), masks[i]);
    EXPECT_GE(mean / double(videos.size()), 0.85);
}

TEST(Checkpoint, RoundTripPreservesEverything) {
    const SmallData d = small_phantoms(8, 8, 16);
    TrainConfig cfg;
    cfg.epochs = 1;
    const SegNetParams p = train(d.videos, d.masks, build({}, 4), cfg).params;
    const auto dir = std::filesystem::temp_directory_path() / "lvdiag_segnet_ckpt_test";
    std::filesystem::remove_all(dir);
    save_checkpoint(dir, p);
    const SegNetParams q = load_checkpoint(dir);
    EXPECT_EQ(q.names, p.names);
    EXPECT_EQ(q.tensors, p.tensors);
    EXPECT_EQ(q.epoch, 1u);
    EXPECT_EQ(q.seed, 4u);
    EXPECT_EQ(q.input_shape, p.input_shape);
    EXPECT_EQ(segment(q, d.videos[0]), segment(p, d.videos[0]));
    std::filesystem::remove_all(dir);
    EXPECT_THROW(load_checkpoint(dir), std::runtime_error);
}
