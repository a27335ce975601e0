#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "agf/errors.hpp"
#include "agf/tensor.hpp"

using namespace agf;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = n(rng);
    return t;
}

// Unfolds input patches into rows so convolution becomes one matmul.
Tensor conv2d_im2col(const Tensor& x, const Tensor& k, std::size_t stride, std::size_t pad) {
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t O = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    const std::size_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
    const std::size_t cols = C * kh * kw;
    Tensor patches({N * Ho * Wo, cols});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < Ho; ++i)
            for (std::size_t j = 0; j < Wo; ++j)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t a = 0; a < kh; ++a)
                        for (std::size_t b = 0; b < kw; ++b) {
                            const long r = static_cast<long>(i * stride + a) - static_cast<long>(pad);
                            const long s = static_cast<long>(j * stride + b) - static_cast<long>(pad);
                            double v = 0.0;
                            if (r >= 0 && s >= 0 && r < static_cast<long>(H) && s < static_cast<long>(W))
                                v = x[((n * C + c) * H + static_cast<std::size_t>(r)) * W + static_cast<std::size_t>(s)];
                            patches.at((n * Ho + i) * Wo + j, (c * kh + a) * kw + b) = v;
                        }
    Tensor kt({cols, O});
    for (std::size_t o = 0; o < O; ++o)
        for (std::size_t q = 0; q < cols; ++q) kt.at(q, o) = k[o * cols + q];
    const Tensor prod = matmul(patches, kt);
    Tensor out({N, O, Ho, Wo});
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o)
            for (std::size_t p = 0; p < Ho * Wo; ++p) out[(n * O + o) * Ho * Wo + p] = prod.at(n * Ho * Wo + p, o);
    return out;
}

}  // namespace

TEST(Tensor, ShapeAndDataMustAgree) {
    EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
    EXPECT_EQ(Tensor::zeros({3, 4}).numel(), 12u);
}

TEST(Matmul, HandExample) {
    const Tensor c = matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{5, 6}, {7, 8}}));
    EXPECT_EQ(c, Tensor::matrix({{19, 22}, {43, 50}}));
}

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
    const Tensor a = random_tensor({3, 3}, 1);
    EXPECT_EQ(matmul(a, Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}})), a);
}

TEST(Matmul, MatchesTripleLoop) {
    const Tensor a = random_tensor({3, 4}, 2), b = random_tensor({4, 2}, 3);
    const Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
            EXPECT_NEAR(c.at(i, j), s, 1e-12);
        }
}

TEST(Matmul, InnerDimensionMismatch) {
    EXPECT_THROW(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), ShapeError);
}

TEST(Conv2d, OnesKernelSumsWindows) {
    const Tensor out = conv2d(Tensor::full({1, 1, 3, 3}, 1.0), Tensor::full({1, 1, 2, 2}, 1.0), 1, 0);
    EXPECT_EQ(out, Tensor::full({1, 1, 2, 2}, 4.0));
}

TEST(Conv2d, ZeroKernelGivesZeros) {
    const Tensor out = conv2d(random_tensor({2, 3, 5, 5}, 4), Tensor::zeros({2, 3, 3, 3}), 1, 1);
    EXPECT_EQ(out, Tensor::zeros({2, 2, 5, 5}));
}

TEST(Conv2d, MatchesIm2colOracle) {
    for (std::size_t stride : {1u, 2u})
        for (std::size_t pad : {0u, 1u}) {
            const Tensor x = random_tensor({2, 3, 6, 5}, 5 + stride + pad), k = random_tensor({4, 3, 3, 3}, 9);
            EXPECT_LE(max_abs_diff(conv2d(x, k, stride, pad), conv2d_im2col(x, k, stride, pad)), 1e-12);
        }
}

TEST(Conv2d, KernelLargerThanPaddedInput) {
    EXPECT_THROW(conv2d(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 3, 3}), 1, 0), ShapeError);
    EXPECT_EQ(conv_out_size(7, 3, 2, 1), 4u);
}

TEST(Activations, Relu) {
    EXPECT_EQ(relu(Tensor::vector({-1.0, 2.0})), Tensor::vector({0.0, 2.0}));
}

TEST(Activations, SoftmaxRowsSumToOne) {
    const Tensor p = softmax(random_tensor({4, 7}, 6));
    for (std::size_t i = 0; i < 4; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 7; ++j) s += p.at(i, j);
        EXPECT_NEAR(s, 1.0, 1e-15);
    }
}

TEST(CrossEntropy, UniformLogitsGiveLogC) {
    const std::vector<std::size_t> labels{0, 3, 4};
    EXPECT_NEAR(cross_entropy(Tensor::zeros({3, 5}), labels), std::log(5.0), 1e-15);
}

TEST(CrossEntropy, ScalarHandValue) {
    const std::vector<std::size_t> labels{0};
    EXPECT_NEAR(cross_entropy(Tensor::matrix({{2, 0}}), labels), std::log(1.0 + std::exp(-2.0)), 1e-15);
    EXPECT_NEAR(cross_entropy(Tensor::matrix({{2, 0}}), labels), 0.1269, 1e-4);
}

TEST(CrossEntropy, LabelOutOfRange) {
    const std::vector<std::size_t> labels{2};
    EXPECT_THROW(cross_entropy(Tensor::zeros({1, 2}), labels), InputError);
}

TEST(CrossEntropy, StableForLargeLogits) {
    const std::vector<std::size_t> labels{1};
    const double l = cross_entropy(Tensor::matrix({{1000, 0}}), labels);
    EXPECT_TRUE(std::isfinite(l));
    EXPECT_NEAR(l, 1000.0, 1e-9);
}
