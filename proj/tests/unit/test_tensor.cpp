#include "lvdiag/tensor/adam.hpp"
#include "lvdiag/tensor/graph.hpp"
#include "lvdiag/tensor/ltsr.hpp"
#include "support/op_instances.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace lvdiag;
using namespace lvdiag::oracle;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
    EXPECT_EQ(a.shape(), b.shape());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST(TensorOps, ReluClampsNegatives) {
    Graph g;
    const Var y = g.relu(g.input(Tensor::from({-1, 0, 2})));
    EXPECT_EQ(g.value(y), Tensor::from({0, 0, 2}));
}

TEST(TensorOps, IdentityKernelConvIsIdentity) {
    Rng rng(3);
    const Tensor x = random_tensor(rng, {2, 3, 4, 5});
    Graph g;
    Tensor w({2, 2, 1, 1, 1});
    w.at({0, 0, 0, 0, 0}) = 1.0;
    w.at({1, 1, 0, 0, 0}) = 1.0;
    const Var y = g.conv3d(g.input(x), g.input(w), g.input(Tensor({2})));
    EXPECT_EQ(g.value(y), x);
}

TEST(TensorOps, ConvSlidingDotProductsByHand) {
    Graph g;
    const Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const Tensor w({1, 1, 1, 2, 2}, {1, 2, 3, 4});
    const Var y = g.conv3d(g.input(x), g.input(w), g.input(Tensor({1})));
    // 1*1+2*2+4*3+5*4 = 37, then shifted windows.
    EXPECT_EQ(g.value(y), Tensor({1, 1, 2, 2}, {37, 47, 67, 77}));
}

TEST(TensorOps, ConvMatchesNestedLoopOracle) {
    Rng rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        const bool wide = trial % 3 == 0;
        const OpInstance inst = random_instance(OpKind::conv3d, rng, wide);
        for (std::size_t s0 = 1; s0 <= 2; ++s0) {
            Conv3dAttrs a;
            a.stride = wide ? std::array<std::size_t, 3>{1, 1, 1} : std::array<std::size_t, 3>{s0, 1, s0};
            a.padding = {1, 0, 1};
            const Tensor& x = inst.leaves[0];
            const Tensor& w = inst.leaves[1];
            if (x.dim(2) < w.dim(3)) continue;
            Graph g;
            const Var y = g.conv3d(g.input(x), g.input(w), g.input(inst.leaves[2]), a);
            EXPECT_LT(max_abs_diff(g.value(y), naive_conv3d(x, w, inst.leaves[2], a.stride, a.padding)), 1e-12);
        }
    }
}

TEST(TensorOps, TransposedConvMatchesScatterOracle) {
    Rng rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const bool wide = trial % 3 == 0;
        Conv3dAttrs a;
        const Shape xs{2, 2, 3, wide ? std::size_t(50) : std::size_t(3)};
        const Shape ws{2, 3, 2, 3, wide ? std::size_t(3) : std::size_t(2)};
        a.stride = wide ? std::array<std::size_t, 3>{1, 1, 1} : std::array<std::size_t, 3>{2, 1, 2};
        a.padding = {0, 1, wide ? std::size_t(1) : std::size_t(0)};
        const Tensor x = random_tensor(rng, xs), w = random_tensor(rng, ws), b = random_tensor(rng, {3});
        Graph g;
        const Var y = g.transposed_conv3d(g.input(x), g.input(w), g.input(b), a);
        EXPECT_LT(max_abs_diff(g.value(y), naive_transposed_conv3d(x, w, b, a.stride, a.padding)), 1e-12);
    }
}

TEST(TensorOps, ConvThenTransposedConvRestoresSpatialShape) {
    Graph g;
    const Var x = g.input(Tensor({1, 8, 12, 16}));
    const Conv3dAttrs down{{2, 2, 2}, {0, 0, 0}};
    const Var y = g.conv3d(x, g.input(Tensor({4, 1, 2, 2, 2})), g.input(Tensor({4})), down);
    const Var z = g.transposed_conv3d(y, g.input(Tensor({4, 1, 2, 2, 2})), g.input(Tensor({1})), down);
    EXPECT_EQ(g.value(z).shape(), g.value(x).shape());
}

TEST(TensorOps, ShapeMismatchNamesOpAndDimensions) {
    Graph g;
    const Var x = g.input(Tensor({3, 4, 4, 4}));
    const Var w = g.input(Tensor({2, 5, 3, 3, 3}));
    const Var b = g.input(Tensor({2}));
    try {
        g.conv3d(x, w, b);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("conv3d"), std::string::npos);
        EXPECT_NE(msg.find("(2,5,3,3,3)"), std::string::npos);
    }
    EXPECT_THROW(g.add(g.input(Tensor({3})), g.input(Tensor({4}))), ShapeError);
    EXPECT_THROW(g.dense(g.input(Tensor({2, 3})), g.input(Tensor({4, 1})), g.input(Tensor({1}))), ShapeError);
}

TEST(TensorOps, SoftmaxIsOnSimplex) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        Graph g;
        const Tensor x = random_tensor(rng, {4, 3}, -50, 50);
        const Tensor p = g.value(g.softmax(g.input(x), 1));
        for (std::size_t r = 0; r < 4; ++r) {
            double s = 0.0;
            for (std::size_t c = 0; c < 3; ++c) {
                EXPECT_GE(p.at({r, c}), 0.0);
                s += p.at({r, c});
            }
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(TensorOps, DropoutZeroFractionAndInferenceIdentity) {
    const Tensor x(Shape{10000}, 1.0);
    for (double keep : {0.5, 0.8}) {
        for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
            Graph g;
            const Tensor y = g.value(g.dropout(g.input(x), {keep, true, seed}));
            std::size_t zeros = 0;
            for (double v : y.data()) {
                if (v == 0.0) ++zeros;
                else EXPECT_DOUBLE_EQ(v, 1.0 / keep);
            }
            EXPECT_NEAR(double(zeros) / 1e4, 1.0 - keep, 0.02);
        }
        Rng rng(9);
        const Tensor r = random_tensor(rng, {257});
        Graph g;
        EXPECT_EQ(g.value(g.dropout(g.input(r), {keep, false, 42})), r);
    }
}

TEST(Autodiff, DeadReluGivesZeroGradient) {
    Graph g;
    const Var x = g.parameter(Tensor::from({-1.0, -0.5, -3.0}));
    const Gradients gr = g.backward(g.reduce_sum(g.relu(x)));
    EXPECT_EQ(gr.of(x), Tensor(Shape{3}));
}

TEST(Autodiff, SquareGradient) {
    Graph g;
    const Var x = g.parameter(Tensor::from({1.0, 2.0}));
    const Gradients gr = g.backward(g.reduce_sum(g.mul(x, x)));
    EXPECT_EQ(gr.of(x), Tensor::from({2.0, 4.0}));
}

TEST(Autodiff, UnusedParameterHasZeroGradient) {
    Graph g;
    const Var used = g.parameter(Tensor::from({1.0, 2.0}));
    const Var unused = g.parameter(Tensor({2, 2}, 7.0));
    const Gradients gr = g.backward(g.reduce_sum(used));
    EXPECT_EQ(gr.of(unused), Tensor({2, 2}));
    EXPECT_EQ(gr.find(unused), nullptr);
}

TEST(Autodiff, NonScalarSeedRejected) {
    Graph g;
    const Var x = g.parameter(Tensor::from({1.0, 2.0}));
    EXPECT_THROW(g.backward(g.relu(x)), ShapeError);
}

TEST(Autodiff, EveryOpKindMatchesFiniteDifferences) {
    Rng rng(2024);
    for (OpKind kind : differentiable_kinds()) {
        for (int trial = 0; trial < 10; ++trial) {
            const OpInstance inst = random_instance(kind, rng);
            EXPECT_LT(gradcheck(inst.fn, inst.leaves), 1e-5) << inst.name << " trial " << trial;
        }
    }
}

TEST(Autodiff, DirectConvKernelsMatchFiniteDifferences) {
    Rng rng(77);
    for (OpKind kind : {OpKind::conv3d, OpKind::transposed_conv3d}) {
        const OpInstance inst = random_instance(kind, rng, /*wide=*/true);
        EXPECT_LT(gradcheck(inst.fn, inst.leaves), 1e-5) << inst.name;
    }
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
    std::vector<Tensor> params{Tensor::from({1.0, -2.0, 3.0})};
    const std::vector<Tensor> grads{Tensor(Shape{3})};
    AdamState st = AdamState::for_params(params);
    adam_step(params, grads, st, 1e-3);
    EXPECT_EQ(params[0], Tensor::from({1.0, -2.0, 3.0}));
    EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstTwoStepsMatchHandExpansion) {
    const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 1.0;
    // Hand expansion of the recurrence from zeroed moments.
    const double m1 = (1 - b1) * g, v1 = (1 - b2) * g * g;
    const double step1 = lr * (m1 / (1 - b1)) / (std::sqrt(v1 / (1 - b2)) + eps);
    const double m2 = b1 * m1 + (1 - b1) * g, v2 = b2 * v1 + (1 - b2) * g * g;
    const double step2 = lr * (m2 / (1 - b1 * b1)) / (std::sqrt(v2 / (1 - b2 * b2)) + eps);
    EXPECT_NEAR(step1, 9.9999999e-4, 1e-11);

    std::vector<Tensor> params{Tensor::scalar(0.5)};
    const std::vector<Tensor> grads{Tensor::scalar(g)};
    AdamState st = AdamState::for_params(params, b1, b2, eps);
    adam_step(params, grads, st, lr);
    EXPECT_NEAR(params[0].item(), 0.5 - step1, 1e-15);
    adam_step(params, grads, st, lr);
    EXPECT_NEAR(params[0].item(), 0.5 - step1 - step2, 1e-15);
    EXPECT_EQ(st.step, 2u);
}

TEST(Adam, DeterministicAndShapeChecked) {
    Rng rng(4);
    std::vector<Tensor> a{random_tensor(rng, {5})}, b = a;
    const std::vector<Tensor> grads{random_tensor(rng, {5})};
    AdamState sa = AdamState::for_params(a), sb = AdamState::for_params(b);
    for (int i = 0; i < 3; ++i) {
        adam_step(a, grads, sa, 1e-3);
        adam_step(b, grads, sb, 1e-3);
    }
    EXPECT_EQ(a, b);
    const std::vector<Tensor> bad{Tensor(Shape{4})};
    EXPECT_THROW(adam_step(a, bad, sa, 1e-3), ShapeError);
}

TEST(LrSchedule, ExponentialDecay) {
    EXPECT_DOUBLE_EQ(lr_schedule(0, 1e-3), 1e-3);
    EXPECT_NEAR(lr_schedule(1, 1e-3), 9.512294245e-4, 1e-12);
    for (std::size_t e = 0; e < 50; ++e) {
        EXPECT_NEAR(lr_schedule(e + 1, 1e-3) / lr_schedule(e, 1e-3), std::exp(-0.05), 1e-14);
        EXPECT_LT(lr_schedule(e + 1, 1e-3), lr_schedule(e, 1e-3));
    }
    EXPECT_THROW(lr_schedule(0, 0.0), std::invalid_argument);
}

TEST(Ltsr, HeaderLayoutIsBitExact) {
    std::ostringstream os;
    write_ltsr(os, Tensor({2, 1}, {1.0, -2.0}));
    const std::string s = os.str();
    ASSERT_EQ(s.size(), 4u + 3u + 2u * 4u + 2u * 8u);
    EXPECT_EQ(s.substr(0, 4), "LTSR");
    EXPECT_EQ(s[4], 1);
    EXPECT_EQ(s[5], 1);
    EXPECT_EQ(s[6], 2);
    EXPECT_EQ(s.substr(7, 8), std::string("\x02\0\0\0\x01\0\0\0", 8));
    // 1.0 = 0x3FF0000000000000, little-endian
    EXPECT_EQ(s.substr(15, 8), std::string("\0\0\0\0\0\0\xF0\x3F", 8));
}

TEST(Ltsr, RandomTensorsRoundTripBitExactly) {
    Rng rng(8);
    for (int trial = 0; trial < 20; ++trial) {
        Shape s;
        const std::size_t rank = 1 + rng.index(4);
        for (std::size_t i = 0; i < rank; ++i) s.push_back(1 + rng.index(5));
        const Tensor t = random_tensor(rng, s, -1e6, 1e6);
        std::stringstream ss;
        write_ltsr(ss, t);
        EXPECT_EQ(read_ltsr(ss), t);
    }
}

TEST(Ltsr, RejectsCorruptInput) {
    std::istringstream bad_magic(std::string("LTSX\x01\x01\x01\x01\0\0\0", 11));
    EXPECT_THROW(read_ltsr(bad_magic), LtsrError);
    std::istringstream bad_dtype(std::string("LTSR\x01\x02\x01\x01\0\0\0", 11));
    EXPECT_THROW(read_ltsr(bad_dtype), LtsrError);
    std::istringstream truncated(std::string("LTSR\x01\x01\x01\x02\0\0\0", 11));
    EXPECT_THROW(read_ltsr(truncated), LtsrError);
}
