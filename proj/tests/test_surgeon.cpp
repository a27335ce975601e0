#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "agf/errors.hpp"
#include "agf/surgeon.hpp"

using namespace agf;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = n(rng);
    return t;
}

// Biases are zero after build; give them values so surgery has to carry them.
Checkpoint with_biases(Checkpoint m, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    const auto layout = parameter_layout(m.spec);
    for (std::size_t i = 0; i < layout.size(); ++i)
        if (layout[i].name.front() == 'b')
            for (auto& v : m.params[i].data()) v = u(rng);
    return m;
}

std::vector<std::size_t> complement(std::size_t width, const std::vector<std::size_t>& keep) {
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < width; ++c)
        if (!std::binary_search(keep.begin(), keep.end(), c)) out.push_back(c);
    return out;
}

PruneSpec keep_spec(const NetworkSpec& spec, std::vector<std::size_t> keep) {
    return PruneSpec{spec.target_layer, std::move(keep), {"test", 0, 0}};
}

NetworkSpec mlp() { return {{4}, {LayerSpec::dense(4, 3), LayerSpec::relu(), LayerSpec::dense(3, 2)}, 0}; }

NetworkSpec conv_conv() {
    return {{2, 6, 6},
            {LayerSpec::conv2d(2, 5, 3, 1, 1), LayerSpec::relu(), LayerSpec::conv2d(5, 3, 3, 2, 1), LayerSpec::relu(),
             LayerSpec::flatten(), LayerSpec::dense(27, 4)},
            0};
}

NetworkSpec conv_flatten_dense() {
    return {{1, 5, 5},
            {LayerSpec::conv2d(1, 4, 3), LayerSpec::relu(), LayerSpec::flatten(), LayerSpec::dense(36, 3)},
            0};
}

NetworkSpec residual() {
    return {{6}, {LayerSpec::dense(6, 6), LayerSpec::relu(), LayerSpec::residual_mlp(6, 8), LayerSpec::dense(6, 3)}, 2};
}

}  // namespace

TEST(Prune, DenseShapes) {
    const Checkpoint p = prune_structural(build(mlp(), 1), keep_spec(mlp(), {0, 2}));
    EXPECT_EQ(p.spec.layers[0], LayerSpec::dense(4, 2));
    EXPECT_EQ(p.spec.layers[2], LayerSpec::dense(2, 2));
    EXPECT_EQ(p.params[0].shape(), (Shape{2, 4}));
    EXPECT_EQ(p.params[2].shape(), (Shape{2, 2}));
}

TEST(Prune, InheritsValuesBitwise) {
    const Checkpoint full = with_biases(build(mlp(), 1), 2);
    const Checkpoint p = prune_structural(full, keep_spec(mlp(), {0, 2}));
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(p.params[0].at(0, i), full.params[0].at(0, i));
        EXPECT_EQ(p.params[0].at(1, i), full.params[0].at(2, i));
    }
    EXPECT_EQ(p.params[1][1], full.params[1][2]);
    for (std::size_t o = 0; o < 2; ++o) EXPECT_EQ(p.params[2].at(o, 1), full.params[2].at(o, 2));
    EXPECT_EQ(p.params[3], full.params[3]);
}

TEST(Prune, ZeroColumnChannelIsExactlyRemovable) {
    Checkpoint full = with_biases(build(mlp(), 3), 4);
    for (std::size_t o = 0; o < 2; ++o) full.params[2].at(o, 1) = 0.0;
    const Checkpoint p = prune_structural(full, keep_spec(mlp(), {0, 2}));
    const Tensor x = random_tensor({10, 4}, 5);
    EXPECT_LE(max_abs_diff(forward(p, x), forward(full, x)), 1e-12);
}

TEST(Prune, KeepAllIsIdentity) {
    const Checkpoint full = with_biases(build(conv_conv(), 1), 2);
    const Checkpoint p = prune_structural(full, keep_spec(full.spec, {0, 1, 2, 3, 4}));
    const Tensor x = random_tensor({3, 2, 6, 6}, 3);
    EXPECT_EQ(forward(p, x), forward(full, x));
    EXPECT_EQ(equivalence_check(full, p, {0, 1, 2, 3, 4}, x), 0.0);
}

TEST(Equivalence, AllTopologies) {
    struct Case {
        NetworkSpec spec;
        Shape probe;
    };
    const std::vector<Case> cases{{mlp(), {7, 4}},
                                  {conv_conv(), {3, 2, 6, 6}},
                                  {conv_flatten_dense(), {4, 1, 5, 5}},
                                  {residual(), {5, 6}}};
    std::mt19937_64 rng(11);
    for (std::size_t ci = 0; ci < cases.size(); ++ci) {
        for (std::uint64_t trial = 0; trial < 10; ++trial) {
            const auto& c = cases[ci];
            const Checkpoint full = with_biases(build(c.spec, trial), trial + 100);
            const std::size_t width = c.spec.target_width();
            std::vector<std::size_t> all(width);
            for (std::size_t i = 0; i < width; ++i) all[i] = i;
            std::shuffle(all.begin(), all.end(), rng);
            const std::size_t k = 1 + rng() % width;
            std::vector<std::size_t> keep(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
            std::sort(keep.begin(), keep.end());
            const Checkpoint p = prune_structural(full, keep_spec(c.spec, keep));
            const Tensor x = random_tensor(c.probe, trial);
            EXPECT_LE(equivalence_check(full, p, keep, x), 1e-10) << "case " << ci << " trial " << trial;
            const auto zeroed = complement(width, keep);
            const std::set<std::size_t> z(zeroed.begin(), zeroed.end());
            EXPECT_LE(max_abs_diff(forward(p, x), forward_masked(full, x, z)), 1e-10);
        }
    }
}

TEST(Equivalence, DetectsCorruptedWeights) {
    const Checkpoint full = with_biases(build(mlp(), 1), 2);
    Checkpoint p = prune_structural(full, keep_spec(mlp(), {1, 2}));
    p.params[0].at(0, 0) += 0.5;
    const Tensor x = random_tensor({6, 4}, 9);
    EXPECT_GT(equivalence_check(full, p, {1, 2}, x), 0.0);
}

TEST(Prune, ResidualBlockShapes) {
    const Checkpoint p = prune_structural(build(residual(), 1), keep_spec(residual(), {1, 3, 5}));
    EXPECT_EQ(p.spec.layers[2].hidden, 3u);
    EXPECT_EQ(p.spec.layers[2].in, 6u);
    p.check_shapes();
}

TEST(Prune, ChannelsCrossingSkipAreUnsupported) {
    const NetworkSpec spec{{6}, {LayerSpec::dense(6, 6), LayerSpec::residual_mlp(6, 4), LayerSpec::dense(6, 2)}, 0};
    EXPECT_THROW(target_consumer(spec), UnsupportedTopologyError);
    EXPECT_THROW(prune_structural(build(spec, 0), keep_spec(spec, {0, 1})), UnsupportedTopologyError);
}

TEST(Prune, InvalidKeepSets) {
    const Checkpoint m = build(mlp(), 0);
    EXPECT_THROW(prune_structural(m, keep_spec(mlp(), {0, 3})), SpecError);
    EXPECT_THROW(prune_structural(m, keep_spec(mlp(), {})), SpecError);
    EXPECT_THROW(prune_structural(m, keep_spec(mlp(), {2, 1})), SpecError);
    EXPECT_THROW(prune_structural(m, keep_spec(mlp(), {1, 1})), SpecError);
}

TEST(Prune, FlopsDecreaseWithFewerChannels) {
    const Checkpoint full = build(conv_conv(), 0);
    std::uint64_t prev = count_flops(full).total + 1;
    for (std::size_t k = 5; k >= 1; --k) {
        std::vector<std::size_t> keep(k);
        for (std::size_t i = 0; i < k; ++i) keep[i] = i;
        const std::uint64_t f = count_flops(prune_structural(full, keep_spec(full.spec, keep))).total;
        EXPECT_LT(f, prev);
        prev = f;
    }
}

TEST(Scratch, SameShapesFreshValues) {
    const Checkpoint full = build(mlp(), 1);
    const Checkpoint p = prune_structural(full, keep_spec(mlp(), {0, 2}));
    const Checkpoint s = scratch_variant(p.spec, 77);
    ASSERT_EQ(s.params.size(), p.params.size());
    for (std::size_t i = 0; i < s.params.size(); ++i) EXPECT_EQ(s.params[i].shape(), p.params[i].shape());
    EXPECT_NE(s.params[0], p.params[0]);
    EXPECT_EQ(scratch_variant(p.spec, 77), s);
}

TEST(PruneSpecJson, RoundTrip) {
    const PruneSpec spec{2, {0, 4, 7}, {"agf", 3, 11}};
    EXPECT_EQ(prune_spec_from_json(to_json(spec)), spec);
    const auto path = std::filesystem::temp_directory_path() / "agf_prune_spec.json";
    save_prune_spec(spec, path);
    EXPECT_EQ(load_prune_spec(path), spec);
}
