#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "agf/analysis.hpp"
#include "agf/csv.hpp"
#include "agf/errors.hpp"

using namespace agf;

namespace {

ChannelScoreTable table(std::vector<double> scores, std::size_t layer = 0) {
    ChannelScoreTable t;
    t.metric = "t";
    t.layer = layer;
    t.scores = std::move(scores);
    return t;
}

std::filesystem::path temp_path(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "agf_analysis_tests";
    std::filesystem::create_directories(dir);
    return dir / name;
}

struct Fixture {
    Dataset data;
    Checkpoint model;
};

Fixture wide_model() {
    SyntheticSpec s{4, 6, 20, 3.0, 1.0, 2};
    const NetworkSpec spec{{6}, {LayerSpec::dense(6, 64), LayerSpec::relu(), LayerSpec::dense(64, 4)}, 0};
    return {gen_gaussian_clusters(s), build(spec, 3)};
}

}  // namespace

TEST(Jaccard, Examples) {
    EXPECT_DOUBLE_EQ(jaccard({1, 2}, {2, 3}), 1.0 / 3.0);
    EXPECT_EQ(jaccard({4, 1, 7}, {1, 7, 4}), 1.0);
    EXPECT_EQ(jaccard({1, 2}, {3, 4}), 0.0);
    EXPECT_EQ(jaccard({}, {}), 1.0);
}

TEST(Jaccard, SymmetricAndBounded) {
    const std::vector<std::size_t> a{0, 3, 5, 9}, b{3, 4, 9};
    EXPECT_EQ(jaccard(a, b), jaccard(b, a));
    EXPECT_GE(jaccard(a, b), 0.0);
    EXPECT_LE(jaccard(a, b), 1.0);
}

TEST(Stability, DataFreeMetricIsPerfectlyStable) {
    const Fixture f = wide_model();
    CalibrationConfig c;
    c.T = 1;
    c.batch_size = 8;
    const auto r = stability(Metric::L1, f.model, f.data, 8, 4, 1, c);
    EXPECT_EQ(r.mean, 1.0);
    EXPECT_EQ(r.pairs.size(), 6u);
}

TEST(Stability, RandomMatchesHypergeometricExpectation) {
    const Fixture f = wide_model();
    CalibrationConfig c;
    c.T = 1;
    c.batch_size = 1;
    const std::size_t k = 8, w = 64;
    const auto r = stability(Metric::Random, f.model, f.data, k, 40, 1, c);
    EXPECT_NEAR(r.mean, static_cast<double>(k) / (2.0 * w - k), 0.01);
}

TEST(Stability, TwoTrialsSinglePair) {
    const Fixture f = wide_model();
    CalibrationConfig c;
    c.T = 2;
    c.batch_size = 8;
    const auto r = stability(Metric::Agf, f.model, f.data, 8, 2, 3, c);
    ASSERT_EQ(r.pairs.size(), 1u);
    EXPECT_EQ(r.pairs[0].value, r.mean);
}

TEST(Stability, InsufficientData) {
    const Fixture f = wide_model();
    CalibrationConfig c;
    c.T = 8;
    c.batch_size = 32;
    EXPECT_THROW(stability(Metric::Agf, f.model, f.data, 8, 3, 0, c), ConfigError);
    EXPECT_THROW(stability(Metric::Agf, f.model, f.data, 8, 1000, 0, c), ConfigError);
}

TEST(Orthogonality, Examples) {
    EXPECT_EQ(orthogonality(table({1, 2, 3, 4}), table({1, 2, 3, 4}), 2).jaccard, 1.0);
    EXPECT_EQ(orthogonality(table({1, 2, 3, 4}), table({4, 3, 2, 1}), 2).jaccard, 0.0);
    // Constant table selects the first k channels under the tie rule.
    EXPECT_DOUBLE_EQ(orthogonality(table({5, 5, 5, 5}), table({0, 9, 8, 0}), 2).jaccard, 1.0 / 3.0);
    EXPECT_THROW(orthogonality(table({1, 2}), table({1, 2}, 1), 1), InputError);
    EXPECT_THROW(orthogonality(table({1, 2}), table({1, 2, 3}), 1), InputError);
}

TEST(Orthogonality, Normalization) {
    EXPECT_EQ(min_max_normalize({2, 4, 3}), (std::vector<double>{0, 1, 0.5}));
    EXPECT_EQ(min_max_normalize({7, 7}), (std::vector<double>{0, 0}));
}

TEST(ProxyFidelity, ReferenceSumRatios) {
    const auto r = fidelity_from_sums(232682, 1557, 4.89e-4, 2.29e-5);
    EXPECT_NEAR(*r.l1_ratio, 149.4, 0.1);
    EXPECT_NEAR(*r.agf_ratio, 21.4, 0.1);
}

TEST(ProxyFidelity, IdentityAndUndefined) {
    const Fixture f = wide_model();
    CalibrationConfig c;
    c.T = 2;
    c.batch_size = 8;
    const auto r = proxy_fidelity(f.model, f.model, f.data, c);
    EXPECT_EQ(*r.l1_ratio, 1.0);
    EXPECT_EQ(*r.agf_ratio, 1.0);
    const auto u = fidelity_from_sums(1, 0, 1, 0);
    EXPECT_FALSE(u.l1_ratio.has_value());
    EXPECT_NE(proxy_fidelity_csv(u).find("undefined"), std::string::npos);
}

TEST(Entropy, Examples) {
    const auto h = prediction_entropy(Tensor::matrix(
        {{0, -1000, -1000}, {0, 0, 0}, {std::log(0.5), std::log(0.25), std::log(0.25)}}));
    EXPECT_NEAR(h[0], 0.0, 1e-12);
    EXPECT_NEAR(h[1], std::log(3.0), 1e-12);
    EXPECT_NEAR(h[2], 1.5 * std::log(2.0), 1e-12);
    EXPECT_NEAR(h[2], 1.0397, 1e-4);
}

TEST(Entropy, HistogramCountsEverySample) {
    const Fixture f = wide_model();
    const RoutingTrace t = route_cascade(f.model, f.model, f.data, 0.6);
    const auto r = entropy_buckets(t, f.model, f.data, 7);
    std::size_t pruned = 0, full = 0;
    for (std::size_t b = 0; b < 7; ++b) {
        pruned += r.pruned[b];
        full += r.full[b];
    }
    EXPECT_EQ(pruned + full, f.data.size());
    EXPECT_EQ(full, static_cast<std::size_t>(std::llround(t.routed_fraction() * f.data.size())));
    EXPECT_THROW(entropy_buckets(t, f.model, f.data, 0), ConfigError);
}

TEST(Emit, DeterministicFiles) {
    StabilityReport r{"agf", 4, 3, {{0, 1, 0.1}, {0, 2, 2.0 / 3.0}, {1, 2, 0.5}}, 0.42};
    const auto a = temp_path("a.csv"), b = temp_path("b.csv");
    emit_report(r, a);
    emit_report(r, b);
    EXPECT_EQ(read_text_file(a), read_text_file(b));
}

TEST(Emit, FullPrecisionRoundTrip) {
    StabilityReport r{"agf", 4, 3, {{0, 1, 0.1}, {0, 2, 2.0 / 3.0}, {1, 2, std::nextafter(0.5, 1.0)}}, 0.0};
    const auto path = temp_path("roundtrip.csv");
    emit_report(r, path);
    const CsvTable t = read_csv_table(path);
    const std::size_t col = t.column("jaccard");
    for (std::size_t i = 0; i < r.pairs.size(); ++i) EXPECT_EQ(parse_real(t.rows[i][col]), r.pairs[i].value);
}

TEST(Emit, EmptyReportIsHeaderOnly) {
    const auto path = temp_path("empty.csv");
    emit_report(StabilityReport{}, path);
    EXPECT_EQ(read_text_file(path), "metric,k,trial_a,trial_b,jaccard\n");
}
