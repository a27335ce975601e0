#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "agf/errors.hpp"
#include "agf/network.hpp"

using namespace agf;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = n(rng);
    return t;
}

NetworkSpec mlp() { return {{4}, {LayerSpec::dense(4, 3), LayerSpec::relu(), LayerSpec::dense(3, 2)}, 0}; }

std::filesystem::path temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "agf_network_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST(Build, SameSeedIsBitwiseIdentical) { EXPECT_EQ(build(mlp(), 7), build(mlp(), 7)); }

TEST(Build, DenseShapes) {
    const Checkpoint m = build(mlp(), 1);
    EXPECT_EQ(m.params[0].shape(), (Shape{3, 4}));
    EXPECT_EQ(m.params[1].shape(), (Shape{3}));
    EXPECT_EQ(m.params[1], Tensor::zeros({3}));
}

TEST(Build, HeInitStandardDeviation) {
    const NetworkSpec spec{{1000}, {LayerSpec::dense(1000, 1000), LayerSpec::dense(1000, 2)}, 0};
    const Checkpoint m = build(spec, 3);
    double sq = 0.0;
    for (double v : m.params[0].data()) sq += v * v;
    const double sd = std::sqrt(sq / static_cast<double>(m.params[0].numel()));
    EXPECT_NEAR(sd / std::sqrt(2.0 / 1000.0), 1.0, 0.05);
}

TEST(Build, IncompatibleChainIsSpecError) {
    const NetworkSpec bad{{4}, {LayerSpec::dense(4, 3), LayerSpec::dense(5, 2)}, 0};
    EXPECT_THROW(build(bad, 0), SpecError);
    const NetworkSpec final_target{{4}, {LayerSpec::dense(4, 3), LayerSpec::dense(3, 2)}, 1};
    EXPECT_THROW(final_target.validate(), SpecError);
}

TEST(Forward, IdentityChainReturnsInput) {
    const NetworkSpec spec{{3}, {LayerSpec::dense(3, 3), LayerSpec::dense(3, 3)}, 0};
    Checkpoint m = build(spec, 0);
    const Tensor eye = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    m.params[0] = eye;
    m.params[2] = eye;
    const Tensor x = random_tensor({5, 3}, 1);
    EXPECT_EQ(forward(m, x), x);
}

TEST(Forward, SingleDenseMatchesMatmulPlusBias) {
    const NetworkSpec spec{{4}, {LayerSpec::dense(4, 3), LayerSpec::dense(3, 2)}, 0};
    Checkpoint m = build(spec, 2);
    m.params[1] = Tensor::vector({0.1, -0.2, 0.3});
    m.params[2] = Tensor::matrix({{1, 0, 0}, {0, 1, 0}});
    const Tensor x = random_tensor({6, 4}, 3);
    const Tensor out = forward(m, x);
    for (std::size_t n = 0; n < 6; ++n)
        for (std::size_t o = 0; o < 2; ++o) {
            double s = m.params[1][o];
            for (std::size_t i = 0; i < 4; ++i) s += x.at(n, i) * m.params[0].at(o, i);
            EXPECT_NEAR(out.at(n, o), s, 1e-12);
        }
}

TEST(Forward, ZeroInputZeroBiasGivesZeroLogits) {
    EXPECT_EQ(forward(build(mlp(), 4), Tensor::zeros({3, 4})), Tensor::zeros({3, 2}));
}

TEST(Forward, ShapeMismatchIsInputError) {
    EXPECT_THROW(forward(build(mlp(), 4), Tensor::zeros({3, 5})), InputError);
}

TEST(Forward, PureFunction) {
    const Checkpoint m = build(mlp(), 5);
    const Tensor x = random_tensor({8, 4}, 6);
    EXPECT_EQ(forward(m, x), forward(m, x));
}

TEST(ForwardMasked, EmptySetIsBitwiseForward) {
    const Checkpoint m = build(mlp(), 5);
    const Tensor x = random_tensor({8, 4}, 6);
    EXPECT_EQ(forward_masked(m, x, {}), forward(m, x));
}

TEST(ForwardMasked, AllChannelsZeroedLeavesOnlyDownstreamBias) {
    Checkpoint m = build(mlp(), 5);
    m.params[3] = Tensor::vector({0.25, -0.5});
    const Tensor out = forward_masked(m, random_tensor({3, 4}, 6), {0, 1, 2});
    for (std::size_t n = 0; n < 3; ++n) {
        EXPECT_EQ(out.at(n, 0), 0.25);
        EXPECT_EQ(out.at(n, 1), -0.5);
    }
}

TEST(ForwardMasked, IndexOutOfRange) {
    EXPECT_THROW(forward_masked(build(mlp(), 5), Tensor::zeros({1, 4}), {3}), InputError);
}

TEST(Flops, DenseIsTwoMN) {
    const NetworkSpec one{{4}, {LayerSpec::dense(4, 3), LayerSpec::relu(), LayerSpec::dense(3, 2)}, 0};
    const FlopReport r = count_flops(one);
    EXPECT_EQ(r.per_layer[0], 24u);
    EXPECT_EQ(r.per_layer[1], 0u);
    EXPECT_EQ(r.total, 24u + 12u);
}

TEST(Flops, ConvClosedForm) {
    const NetworkSpec spec{{3, 8, 8},
                           {LayerSpec::conv2d(3, 4, 3, 1, 1), LayerSpec::relu(), LayerSpec::flatten(),
                            LayerSpec::dense(256, 10)},
                           0};
    const FlopReport r = count_flops(spec);
    EXPECT_EQ(r.per_layer[0], 2u * 4 * 3 * 3 * 3 * 8 * 8);
    EXPECT_EQ(r.total, r.per_layer[0] + 2u * 256 * 10);
}

TEST(Flops, ResidualBlock) {
    const NetworkSpec spec{{6}, {LayerSpec::residual_mlp(6, 4), LayerSpec::dense(6, 2)}, 0};
    EXPECT_EQ(count_flops(spec).per_layer[0], 2u * 6 * 4 * 2);
}

TEST(Flops, WideVersusSingleChannelRatio) {
    // A wide teacher against a 1-channel expert gives a full:pruned ratio around 150.
    const NetworkSpec full{{128}, {LayerSpec::dense(128, 150), LayerSpec::relu(), LayerSpec::dense(150, 10)}, 0};
    const NetworkSpec pruned{{128}, {LayerSpec::dense(128, 1), LayerSpec::relu(), LayerSpec::dense(1, 10)}, 0};
    const double r = static_cast<double>(count_flops(full).total) / static_cast<double>(count_flops(pruned).total);
    EXPECT_NEAR(r, 150.0, 1.0);
}

TEST(Checkpoint, RoundTripIsBitwise) {
    const NetworkSpec spec{{2, 5, 5},
                           {LayerSpec::conv2d(2, 3, 3, 1, 1), LayerSpec::relu(), LayerSpec::flatten(),
                            LayerSpec::dense(75, 6), LayerSpec::residual_mlp(6, 4), LayerSpec::dense(6, 3)},
                           0};
    Checkpoint m = build(spec, 9);
    m.meta = {9, 12, 0xdeadbeefULL};
    const auto path = temp_path("roundtrip.ckpt");
    save(m, path);
    EXPECT_EQ(load(path), m);
}

TEST(Checkpoint, TruncatedFileIsFormatError) {
    const auto path = temp_path("truncated.ckpt");
    save(build(mlp(), 1), path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 5);
    try {
        load(path);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("byte offset"), std::string::npos);
    }
}

TEST(Checkpoint, BadMagicIsFormatError) {
    const auto path = temp_path("magic.ckpt");
    std::ofstream(path, std::ios::binary) << "NOTACKPT and then some";
    EXPECT_THROW(load(path), FormatError);
}

TEST(Checkpoint, TrailingBytesAreFormatError) {
    const auto path = temp_path("trailing.ckpt");
    save(build(mlp(), 1), path);
    std::ofstream(path, std::ios::binary | std::ios::app) << "x";
    EXPECT_THROW(load(path), FormatError);
}

TEST(Checkpoint, LoadIntoDifferentSpecIsMismatch) {
    const auto path = temp_path("mismatch.ckpt");
    save(build(mlp(), 1), path);
    NetworkSpec other = mlp();
    other.layers[0].out = 5;
    other.layers[2].in = 5;
    EXPECT_THROW(load_into(path, other), SpecMismatchError);
    EXPECT_NO_THROW(load_into(path, mlp()));
}
