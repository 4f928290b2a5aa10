#include "lvdiag/phantom.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <fstream>
#include <numbers>

using namespace lvdiag;
using namespace lvdiag::phantom;

namespace {

struct Box {
    double top, bottom, left, right;
    double cy() const { return 0.5 * (top + bottom); }
    double cx() const { return 0.5 * (left + right); }
};

// Bounding box of the union of all frames' masks, in pixel-center coordinates.
Box union_box(const Tensor& mask) {
    const std::size_t T = mask.dim(0), H = mask.dim(1), W = mask.dim(2);
    Box b{1e9, -1e9, 1e9, -1e9};
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                if (mask.at({t, y, x}) > 0.5) {
                    b.top = std::min(b.top, double(y));
                    b.bottom = std::max(b.bottom, double(y) + 1.0);
                    b.left = std::min(b.left, double(x));
                    b.right = std::max(b.right, double(x) + 1.0);
                }
    return b;
}

struct HalfAreas {
    std::vector<double> apical, basal;
};

HalfAreas half_areas(const Tensor& mask) {
    const Box b = union_box(mask);
    const std::size_t T = mask.dim(0), H = mask.dim(1), W = mask.dim(2);
    HalfAreas a{std::vector<double>(T), std::vector<double>(T)};
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x)
                if (mask.at({t, y, x}) > 0.5) (double(y) + 0.5 < b.cy() ? a.apical[t] : a.basal[t]) += 1.0;
    return a;
}

double relative_variation(const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return (*hi - *lo) / *hi;
}

// Boundary distance along a ray (pixels), stepping 0.05 px from the center.
double ray_extent(const Tensor& mask, std::size_t t, double cx, double cy, double dx, double dy) {
    const std::size_t H = mask.dim(1), W = mask.dim(2);
    double r = 0.0;
    for (;; r += 0.05) {
        const double x = cx + r * dx, y = cy + r * dy;
        if (x < 0 || y < 0 || x >= double(W) || y >= double(H)) break;
        if (mask.at({t, std::size_t(y), std::size_t(x)}) < 0.5) break;
    }
    return r;
}

std::size_t components(const Tensor& mask, std::size_t t) {
    const std::size_t H = mask.dim(1), W = mask.dim(2);
    std::vector<char> seen(H * W, 0);
    std::size_t count = 0;
    for (std::size_t s = 0; s < H * W; ++s) {
        if (seen[s] || mask[t * H * W + s] < 0.5) continue;
        ++count;
        std::deque<std::size_t> q{s};
        seen[s] = 1;
        while (!q.empty()) {
            const std::size_t p = q.front();
            q.pop_front();
            const std::size_t y = p / W, x = p % W;
            const std::size_t nb[4] = {y > 0 ? p - W : p, y + 1 < H ? p + W : p, x > 0 ? p - 1 : p, x + 1 < W ? p + 1 : p};
            for (std::size_t n : nb)
                if (!seen[n] && mask[t * H * W + n] > 0.5) {
                    seen[n] = 1;
                    q.push_back(n);
                }
        }
    }
    return count;
}

PhantomConfig clean_config() {
    PhantomConfig c;
    c.speckle = 0.0;
    return c;
}

} // namespace

TEST(Phantom, SameInputsGiveBitIdenticalCase) {
    PhantomConfig cfg;
    cfg.artifact_probability = 0.5;
    const LabeledEcho a = generate_case(cfg, 99, Label::tts);
    const LabeledEcho b = generate_case(cfg, 99, Label::tts);
    EXPECT_EQ(a.video, b.video);
    EXPECT_EQ(a.mask, b.mask);
    EXPECT_NE(generate_case(cfg, 100, Label::tts).video, a.video);
}

TEST(Phantom, VideoAndMaskRanges) {
    const PhantomConfig cfg;
    const LabeledEcho e = generate_case(cfg, 5, Label::stemi);
    EXPECT_EQ(e.video.shape(), (Shape{16, 64, 64}));
    for (double v : e.video.data()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
    }
    for (double v : e.mask.data()) EXPECT_TRUE(v == 0.0 || v == 1.0);
}

TEST(Phantom, TtsApexStillBaseContracts) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const HalfAreas a = half_areas(generate_case(clean_config(), seed, Label::tts).mask);
        EXPECT_LT(relative_variation(a.apical), 0.10) << "seed " << seed;
        EXPECT_GT(relative_variation(a.basal), 0.20) << "seed " << seed;
    }
}

TEST(Phantom, StemiSeptalSectorFrozen) {
    // The frozen sector is centered at normalized angle pi - 0.45 (lower-left wall).
    const double theta = std::numbers::pi - 0.45;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Tensor mask = generate_case(clean_config(), seed, Label::stemi).mask;
        const Box b = union_box(mask);
        const double ax = 0.5 * (b.right - b.left), ay = 0.5 * (b.bottom - b.top);
        for (double dtheta : {-0.2, 0.0, 0.2}) {
            double dx = ax * std::cos(theta + dtheta), dy = ay * std::sin(theta + dtheta);
            const double norm = std::hypot(dx, dy);
            dx /= norm;
            dy /= norm;
            double lo = 1e9, hi = -1e9;
            for (std::size_t t = 0; t < mask.dim(0); ++t) {
                const double r = ray_extent(mask, t, b.cx(), b.cy(), dx, dy);
                lo = std::min(lo, r);
                hi = std::max(hi, r);
            }
            EXPECT_LT(hi - lo, 1.0) << "seed " << seed << " dtheta " << dtheta;
        }
        // The apex, by contrast, moves by several pixels.
        double lo = 1e9, hi = -1e9;
        for (std::size_t t = 0; t < mask.dim(0); ++t) {
            const double r = ray_extent(mask, t, b.cx(), b.cy(), 0.0, -1.0);
            lo = std::min(lo, r);
            hi = std::max(hi, r);
        }
        EXPECT_GT(hi - lo, 3.0);
    }
}

TEST(Phantom, MaskIsOneComponentWithinAreaBounds) {
    PhantomConfig cfg;
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const LabeledEcho e = generate_case(cfg, seed, seed % 2 ? Label::tts : Label::stemi);
        const std::size_t T = e.mask.dim(0), HW = e.mask.dim(1) * e.mask.dim(2);
        for (std::size_t t = 0; t < T; ++t) {
            EXPECT_EQ(components(e.mask, t), 1u);
            double area = 0.0;
            for (std::size_t i = 0; i < HW; ++i) area += e.mask[t * HW + i];
            EXPECT_GE(area / double(HW), 0.02);
            EXPECT_LE(area / double(HW), 0.60);
        }
    }
}

TEST(Phantom, ClassesSeparableByAreaVariationOracle) {
    // Hand-written rule: apical variation well below basal variation => tts.
    std::size_t correct = 0, total = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        const Label truth = seed % 2 ? Label::tts : Label::stemi;
        const HalfAreas a = half_areas(generate_case(clean_config(), seed * 7919, truth).mask);
        const double ratio = relative_variation(a.apical) / relative_variation(a.basal);
        const Label guess = ratio < 0.5 ? Label::tts : Label::stemi;
        correct += guess == truth;
        ++total;
    }
    EXPECT_GE(double(correct) / double(total), 0.95);
}

TEST(Phantom, DatasetLabelCounts) {
    PhantomConfig cfg;
    cfg.frames = 4;
    cfg.height = cfg.width = 16;
    auto count = [](const std::vector<CaseSpec>& plan) {
        std::size_t n = 0;
        for (const auto& c : plan) n += c.label == Label::tts;
        return n;
    };
    const auto plan300 = dataset_plan(cfg, 300);
    EXPECT_EQ(count(plan300), 140u);
    EXPECT_EQ(plan300.size() - count(plan300), 160u);
    cfg.tts_fraction = 0.5;
    EXPECT_EQ(count(dataset_plan(cfg, 8)), 4u);
    EXPECT_THROW(dataset_plan(cfg, 7), std::invalid_argument);
}

TEST(Phantom, GenerationOrderDoesNotMatter) {
    PhantomConfig cfg;
    cfg.frames = 8;
    cfg.height = cfg.width = 32;
    const auto forward = generate_dataset(cfg, 10);
    auto plan = dataset_plan(cfg, 10);
    for (std::size_t k = plan.size(); k-- > 0;) {
        const LabeledEcho e = generate_case(cfg, plan[k].seed, plan[k].label);
        EXPECT_EQ(e.video, forward[k].video);
        EXPECT_EQ(e.mask, forward[k].mask);
        EXPECT_EQ(plan[k].id, forward[k].id);
    }
}

TEST(Speckle, ZeroStrengthIsIdentity) {
    const LabeledEcho e = generate_case(clean_config(), 3, Label::tts);
    EXPECT_EQ(add_speckle(e.video, 0.0, 17), e.video);
}

TEST(Speckle, MultiplicativeNoiseHasZeroMean) {
    const Tensor v({16, 64, 64}, 0.5);
    const Tensor s = add_speckle(v, 0.2, 12345);
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (s[i] > 0.0 && s[i] < 1.0) {
            sum += s[i] / v[i] - 1.0;
            ++n;
        }
    EXPECT_NEAR(sum / double(n), 0.0, 0.01);
    EXPECT_EQ(add_speckle(v, 0.2, 12345), s);
    EXPECT_THROW(add_speckle(v, -0.1, 1), std::invalid_argument);
}

TEST(Phantom, InvalidConfigsRejected) {
    PhantomConfig c;
    c.frames = 3;
    EXPECT_THROW(generate_case(c, 1, Label::tts), std::invalid_argument);
    c = PhantomConfig{};
    c.width = 8;
    EXPECT_THROW(generate_case(c, 1, Label::tts), std::invalid_argument);
    c = PhantomConfig{};
    c.tts_fraction = 1.5;
    EXPECT_THROW(dataset_plan(c, 10), std::invalid_argument);
}

TEST(PhantomIo, DatasetDirectoryRoundTrip) {
    PhantomConfig cfg;
    cfg.frames = 4;
    cfg.height = cfg.width = 16;
    const auto cases = generate_dataset(cfg, 8);
    const auto dir = std::filesystem::temp_directory_path() / "lvdiag_phantom_io_test";
    std::filesystem::remove_all(dir);
    write_dataset(dir, cases);
    std::ifstream manifest(dir / "manifest.csv");
    std::string header;
    std::getline(manifest, header);
    EXPECT_EQ(header, "id,label,seed,frames,height,width");
    const auto back = read_dataset(dir);
    ASSERT_EQ(back.size(), cases.size());
    for (std::size_t i = 0; i < cases.size(); ++i) {
        EXPECT_EQ(back[i].id, cases[i].id);
        EXPECT_EQ(back[i].label, cases[i].label);
        EXPECT_EQ(back[i].seed, cases[i].seed);
        EXPECT_EQ(back[i].video, cases[i].video);
        EXPECT_EQ(back[i].mask, cases[i].mask);
    }
    std::filesystem::remove_all(dir);
}
