#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "agf/datasets.hpp"
#include "agf/errors.hpp"
#include "agf/importance.hpp"
#include "agf/trainer.hpp"

using namespace agf;

namespace {

std::filesystem::path temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "agf_dataset_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

void put_be32(std::ofstream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

TEST(GaussianClusters, Deterministic) {
    SyntheticSpec s;
    s.seed = 3;
    const Dataset a = gen_gaussian_clusters(s), b = gen_gaussian_clusters(s);
    EXPECT_EQ(a.inputs, b.inputs);
    EXPECT_EQ(a.labels, b.labels);
}

TEST(GaussianClusters, ZeroNoiseCollapsesClasses) {
    SyntheticSpec s;
    s.noise_sigma = 0.0;
    s.samples_per_class = 4;
    const Dataset d = gen_gaussian_clusters(s);
    for (std::size_t i = 0; i < d.size(); ++i)
        for (std::size_t j = 0; j < d.size(); ++j)
            if (d.labels[i] == d.labels[j]) {
                for (std::size_t f = 0; f < s.dim; ++f) ASSERT_EQ(d.inputs.at(i, f), d.inputs.at(j, f));
            }
}

TEST(GaussianClusters, MeansOnSphere) {
    SyntheticSpec s;
    s.noise_sigma = 0.0;
    s.cluster_separation = 7.0;
    const Dataset d = gen_gaussian_clusters(s);
    double sq = 0.0;
    for (std::size_t f = 0; f < s.dim; ++f) sq += d.inputs.at(0, f) * d.inputs.at(0, f);
    EXPECT_NEAR(std::sqrt(sq), 7.0, 1e-12);
}

TEST(GaussianClusters, InvalidSpec) {
    SyntheticSpec s;
    s.cluster_separation = 0.0;
    EXPECT_THROW(gen_gaussian_clusters(s), ConfigError);
    s.cluster_separation = 1.0;
    s.noise_sigma = -1.0;
    EXPECT_THROW(gen_gaussian_clusters(s), ConfigError);
}

TEST(GaussianClusters, LinearClassifierSeparatesWellSpacedClusters) {
    SyntheticSpec s{10, 32, 50, 10.0, 0.1, 2};
    const Dataset d = gen_gaussian_clusters(s);
    const NetworkSpec linear{{32}, {LayerSpec::dense(32, 10), LayerSpec::dense(10, 10)}, 0};
    TrainConfig c;
    c.epochs = 20;
    c.lr0 = 1e-2;
    const auto r = train(build(linear, 1), d, c);
    EXPECT_GE(evaluate(r.model, d), 0.99);
}

TEST(CancellationProbe, DirectAccumulation) {
    const CancellationProbe p = gen_cancellation_probe(11);
    // Per-sample Y * dL/dY for the designated channel, accumulated by hand.
    Trace t;
    const auto rec = forward_on(t, p.model, p.data.inputs, {}, true);
    t.retain_grad(rec.target_activation);
    const auto g = t.backward(cross_entropy(rec.logits, p.data.labels, Reduction::Sum));
    const Tensor& y = rec.target_activation.value();
    const Tensor& dy = g.of(rec.target_activation);
    double signed_sum = 0.0, abs_sum = 0.0;
    const std::size_t c = p.designated_channel;
    for (std::size_t n = 0; n < p.data.size(); ++n) {
        const double v = y.at(n, c) * dy.at(n, c);
        signed_sum += v;
        abs_sum += std::abs(v);
    }
    const double n = static_cast<double>(p.data.size());
    EXPECT_LT(std::abs(signed_sum / n), 1e-6);
    EXPECT_GT(abs_sum / n, 0.1);
}

TEST(CancellationProbe, OrderFree) {
    const CancellationProbe p = gen_cancellation_probe(5);
    CalibrationConfig c;
    c.T = 1;
    c.batch_size = p.data.size();
    c.shuffle = false;
    const auto a = calibrate_feature_scores(p.model, p.data, c);
    std::vector<std::size_t> order(p.data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = order.size() - 1 - i;
    const auto b = calibrate_feature_scores(p.model, p.data.subset(order), c);
    for (std::size_t ch = 0; ch < a.agf.width(); ++ch) {
        EXPECT_NEAR(a.agf.scores[ch], b.agf.scores[ch], 1e-12);
        EXPECT_NEAR(a.taylor_feature.scores[ch], b.taylor_feature.scores[ch], 1e-12);
    }
}

TEST(CancellationProbe, OneSidedHalfHasNoCancellation) {
    const CancellationProbe p = gen_cancellation_probe(5);
    const Dataset half = p.data.subset(indices_with_label(p.data, 0));
    CalibrationConfig c;
    c.T = 1;
    c.batch_size = half.size();
    const auto s = calibrate_feature_scores(p.model, half, c);
    const std::size_t ch = p.designated_channel;
    EXPECT_NEAR(s.taylor_feature.scores[ch], s.agf.scores[ch], 1e-12);
    EXPECT_GT(s.taylor_feature.scores[ch], 0.1);
}

TEST(CancellationProbe, GapAcrossSeeds) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const CancellationProbe p = gen_cancellation_probe(seed);
        CalibrationConfig c;
        c.T = 1;
        c.batch_size = p.data.size();
        const auto s = calibrate_feature_scores(p.model, p.data, c);
        EXPECT_LT(s.taylor_feature.scores[p.designated_channel], 1e-6);
        EXPECT_GT(s.agf.scores[p.designated_channel], 0.1);
    }
}

TEST(Csv, HandWrittenRowsParseExactly) {
    const auto path = temp_path("two.csv");
    std::ofstream(path) << "1,0.5,-2\n0,3.25,1e-3\n";
    const Dataset d = load_csv(path);
    EXPECT_EQ(d.labels, (std::vector<std::size_t>{1, 0}));
    EXPECT_EQ(d.num_classes, 2u);
    EXPECT_EQ(d.inputs, Tensor::matrix({{0.5, -2}, {3.25, 1e-3}}));
}

TEST(Csv, WriterLoaderRoundTripIsBitwise) {
    SyntheticSpec s;
    s.samples_per_class = 3;
    const Dataset d = gen_gaussian_clusters(s);
    const auto path = temp_path("roundtrip.csv");
    save_csv(d, path);
    const Dataset back = load_csv(path, d.num_classes);
    EXPECT_EQ(back.inputs, d.inputs);
    EXPECT_EQ(back.labels, d.labels);
}

TEST(Csv, RowLengthMismatchReportsLine) {
    const auto path = temp_path("ragged.csv");
    std::ofstream(path) << "0,1,2\n1,3\n";
    try {
        load_csv(path);
        FAIL() << "expected FormatError";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
    }
}

TEST(Idx, ReadsImagesAndLabels) {
    const auto images = temp_path("img.idx"), labels = temp_path("lbl.idx");
    {
        std::ofstream out(images, std::ios::binary);
        put_be32(out, 0x803);
        put_be32(out, 2);
        put_be32(out, 2);
        put_be32(out, 2);
        const unsigned char px[8] = {0, 255, 51, 102, 1, 2, 3, 4};
        out.write(reinterpret_cast<const char*>(px), 8);
    }
    {
        std::ofstream out(labels, std::ios::binary);
        put_be32(out, 0x801);
        put_be32(out, 2);
        const unsigned char l[2] = {3, 1};
        out.write(reinterpret_cast<const char*>(l), 2);
    }
    const Dataset d = load_idx(images, labels);
    EXPECT_EQ(d.inputs.shape(), (Shape{2, 1, 2, 2}));
    EXPECT_EQ(d.inputs[1], 1.0);
    EXPECT_EQ(d.inputs[2], 51.0 / 255.0);
    EXPECT_EQ(d.labels, (std::vector<std::size_t>{3, 1}));
}

TEST(Idx, WrongMagicIsFormatError) {
    const auto images = temp_path("bad.idx"), labels = temp_path("bad_lbl.idx");
    {
        std::ofstream out(images, std::ios::binary);
        put_be32(out, 0x802);
        put_be32(out, 0);
    }
    {
        std::ofstream out(labels, std::ios::binary);
        put_be32(out, 0x801);
        put_be32(out, 0);
    }
    EXPECT_THROW(load_idx(images, labels), FormatError);
}

TEST(Batches, StorageOrderWithoutShuffle) {
    const auto b = batch_indices(7, 3, 42, false);
    EXPECT_EQ(b, (std::vector<std::vector<std::size_t>>{{0, 1, 2}, {3, 4, 5}, {6}}));
}

TEST(Batches, SizesKeepPartialBatch) {
    std::vector<std::size_t> sizes;
    for (const auto& b : batch_indices(10, 3, 1, true)) sizes.push_back(b.size());
    EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 3, 1}));
}

TEST(Batches, SeededPermutation) {
    auto flat = [](std::uint64_t seed) {
        std::vector<std::size_t> all;
        for (const auto& b : batch_indices(50, 8, seed, true)) all.insert(all.end(), b.begin(), b.end());
        return all;
    };
    EXPECT_EQ(flat(1), flat(1));
    EXPECT_NE(flat(1), flat(2));
    auto a = flat(1), b = flat(2);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], i);
}

TEST(Dataset, ValidateRejectsBadLabels) {
    Dataset d{Tensor::zeros({2, 3}), {0, 5}, 2};
    EXPECT_THROW(d.validate(), InputError);
}

TEST(Dataset, StratifiedHoldout) {
    SyntheticSpec s;
    s.samples_per_class = 10;
    const auto [train_set, test_set] = split_holdout(gen_gaussian_clusters(s), 0.3, 1);
    EXPECT_EQ(train_set.size() + test_set.size(), 100u);
    for (std::size_t c = 0; c < 10; ++c) EXPECT_EQ(indices_with_label(test_set, c).size(), 3u);
}
