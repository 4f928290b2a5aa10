#include "lvdiag/phantom.hpp"

#include "lvdiag/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lvdiag::phantom {
namespace {

constexpr double kPi = std::numbers::pi;

constexpr double kCavityLevel = 0.08;
constexpr double kTissueLevel = 0.22;
constexpr double kWallLevel = 0.62;
constexpr double kWallTexture = 0.15;
constexpr double kWallThickness = 0.30;  // in units of the normalized radius
constexpr double kArtifactBoost = 0.5;

double smoothstep(double x) {
    x = std::clamp(x, 0.0, 1.0);
    return x * x * (3.0 - 2.0 * x);
}

double wrap_angle(double a) {
    while (a > kPi) a -= 2.0 * kPi;
    while (a < -kPi) a += 2.0 * kPi;
    return a;
}

/// Per-case geometry and wall-motion profile.
struct Heart {
    double cx, cy;        // cavity center (pixels)
    double ax, ay;        // semi-axes (pixels); long axis is vertical, apex up
    double phase;         // cardiac phase offset
    double texture_phase;
    Label label;
    double apex_contraction, base_contraction;  // tts
    double global_contraction, septal_center;   // stemi

    // Fraction of the normalized radius lost at full contraction, at angle
    // theta = atan2(y, x) of the normalized offset; y > 0 is basal.
    double contraction(double theta) const {
        if (label == Label::tts) {
            const double basal = smoothstep(std::sin(theta) / 0.35);
            return apex_contraction + (base_contraction - apex_contraction) * basal;
        }
        const double dist = std::abs(wrap_angle(theta - septal_center));
        return global_contraction * smoothstep((dist - kFrozenHalfWidth) / 0.3);
    }

    static constexpr double kFrozenHalfWidth = 0.5;
};

Heart draw_heart(const PhantomConfig& cfg, Rng& rng, Label label) {
    Heart h{};
    const double W = double(cfg.width), H = double(cfg.height);
    h.cx = 0.5 * W + rng.uniform(-0.04, 0.04) * W;
    h.cy = 0.5 * H + rng.uniform(-0.04, 0.04) * H;
    h.ax = 0.17 * W * rng.uniform(0.92, 1.08);
    h.ay = 0.33 * H * rng.uniform(0.92, 1.08);
    h.phase = rng.uniform(0.0, 2.0 * kPi);
    h.texture_phase = rng.uniform(0.0, 2.0 * kPi);
    h.label = label;
    h.apex_contraction = rng.uniform(0.01, 0.03);
    h.base_contraction = rng.uniform(0.26, 0.34);
    h.global_contraction = rng.uniform(0.24, 0.32);
    h.septal_center = kPi - 0.45;  // lower-left wall: basal septum in the apical four-chamber view
    return h;
}

} // namespace

void PhantomConfig::validate() const {
    if (frames < 4) throw std::invalid_argument("phantom: frames must be >= 4");
    if (height < 16 || width < 16) throw std::invalid_argument("phantom: height and width must be >= 16");
    if (!(tts_fraction >= 0.0 && tts_fraction <= 1.0)) throw std::invalid_argument("phantom: tts_fraction outside [0,1]");
    if (!(artifact_probability >= 0.0 && artifact_probability <= 1.0))
        throw std::invalid_argument("phantom: artifact_probability outside [0,1]");
    if (!(speckle >= 0.0)) throw std::invalid_argument("phantom: speckle must be >= 0");
}

LabeledEcho generate_case(const PhantomConfig& config, std::uint64_t case_seed, Label label) {
    config.validate();
    Rng rng(derive_seed(case_seed, 1));
    const Heart heart = draw_heart(config, rng, label);

    const std::size_t T = config.frames, H = config.height, W = config.width;
    LabeledEcho echo;
    echo.seed = case_seed;
    echo.label = label;
    echo.video = Tensor({T, H, W});
    echo.mask = Tensor({T, H, W});

    const double two_pi = 2.0 * kPi;
    for (std::size_t t = 0; t < T; ++t) {
        const double squeeze = 0.5 * (1.0 - std::cos(two_pi * double(t) / double(T) + heart.phase));
        for (std::size_t y = 0; y < H; ++y)
            for (std::size_t x = 0; x < W; ++x) {
                const double nx = (double(x) + 0.5 - heart.cx) / heart.ax;
                const double ny = (double(y) + 0.5 - heart.cy) / heart.ay;
                const double r = std::hypot(nx, ny);
                const double theta = std::atan2(ny, nx);
                const double boundary = 1.0 - heart.contraction(theta) * squeeze;
                const std::size_t i = (t * H + y) * W + x;
                double v = kTissueLevel;
                if (r < boundary) {
                    v = kCavityLevel;
                    echo.mask[i] = 1.0;
                } else if (r < boundary + kWallThickness) {
                    v = kWallLevel + kWallTexture * std::sin(5.0 * theta + heart.texture_phase);
                }
                echo.video[i] = v;
            }
    }

    if (rng.bernoulli(config.artifact_probability)) {
        const std::size_t band = std::max<std::size_t>(2, H * 6 / 100);
        const std::size_t y0 = rng.index(H - band + 1);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t y = y0; y < y0 + band; ++y)
                for (std::size_t x = 0; x < W; ++x) {
                    double& v = echo.video[(t * H + y) * W + x];
                    v = std::min(1.0, v + kArtifactBoost);
                }
    }

    echo.video = add_speckle(echo.video, config.speckle, derive_seed(case_seed, 2));

    const double frame_area = double(H * W);
    for (std::size_t t = 0; t < T; ++t) {
        double area = 0.0;
        for (std::size_t i = 0; i < H * W; ++i) area += echo.mask[t * H * W + i];
        const double frac = area / frame_area;
        if (frac < 0.02 || frac > 0.60)
            throw PhantomError("phantom: frame " + std::to_string(t) + " mask covers " + std::to_string(frac) +
                               " of the frame (allowed 0.02..0.60)");
    }
    return echo;
}

Tensor add_speckle(const Tensor& video, double strength, std::uint64_t seed) {
    if (!(strength >= 0.0)) throw std::invalid_argument("add_speckle: strength must be >= 0");
    if (strength == 0.0) return video;
    Tensor out = video;
    Rng rng(seed);
    for (double& v : out.data()) v = std::clamp(v * (1.0 + strength * rng.normal()), 0.0, 1.0);
    return out;
}

std::vector<CaseSpec> dataset_plan(const PhantomConfig& config, std::size_t n) {
    config.validate();
    if (n < 8) throw std::invalid_argument("phantom: dataset needs at least 8 cases");
    const auto n_tts = std::size_t(std::llround(double(n) * config.tts_fraction));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(config.seed, 0xDA7A));
    std::shuffle(order.begin(), order.end(), rng.engine());

    std::vector<CaseSpec> plan(n);
    for (std::size_t i = 0; i < n; ++i) {
        char id[32];
        std::snprintf(id, sizeof id, "case_%04zu", i);
        plan[i].id = id;
        plan[i].seed = derive_seed(config.seed, i);
    }
    for (std::size_t k = 0; k < n; ++k) plan[order[k]].label = k < n_tts ? Label::tts : Label::stemi;
    return plan;
}

std::vector<LabeledEcho> generate_dataset(const PhantomConfig& config, std::size_t n) {
    std::vector<LabeledEcho> cases;
    cases.reserve(n);
    for (const CaseSpec& spec : dataset_plan(config, n)) {
        LabeledEcho echo = generate_case(config, spec.seed, spec.label);
        echo.id = spec.id;
        cases.push_back(std::move(echo));
    }
    return cases;
}

} // namespace lvdiag::phantom
