#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "agf/datasets.hpp"
#include "agf/importance.hpp"
#include "agf/json_io.hpp"
#include "agf/network.hpp"
#include "agf/router.hpp"

namespace agf {

// |a ∩ b| / |a ∪ b|; two empty sets give 1. Duplicates are ignored.
double jaccard(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b);

struct PairJaccard {
    std::size_t trial_a = 0;
    std::size_t trial_b = 0;
    double value = 0.0;
};

struct StabilityReport {
    std::string metric;
    std::size_t k = 0;
    std::size_t trials = 0;
    std::vector<PairJaccard> pairs;
    double mean = 0.0;
};

// Scores `metric` on `trials` disjoint slices of a seeded permutation of the
// data and compares the top-k sets pairwise. Each slice is calibrated with the
// batch settings of `calibration`; the random metric draws seed + trial.
// Throws ConfigError when the data cannot fill the slices.
StabilityReport stability(Metric metric, const Checkpoint& model, const Dataset& data, std::size_t k,
                          std::size_t trials, std::uint64_t seed, const CalibrationConfig& calibration);

struct OrthogonalityReport {
    std::string metric_a;
    std::string metric_b;
    std::size_t k = 0;
    double jaccard = 0.0;
    std::vector<double> norm_a;  // min-max normalized, constant tables map to 0
    std::vector<double> norm_b;
};

std::vector<double> min_max_normalize(const std::vector<double>& scores);
// Throws InputError when the tables cover different layers or widths.
OrthogonalityReport orthogonality(const ChannelScoreTable& a, const ChannelScoreTable& b, std::size_t k);

struct ProxyFidelityReport {
    double l1_full = 0.0;
    double l1_pruned = 0.0;
    double agf_full = 0.0;
    double agf_pruned = 0.0;
    std::optional<double> l1_ratio;   // empty when the pruned sum is 0
    std::optional<double> agf_ratio;
};

// Ratio arithmetic from precomputed sums.
ProxyFidelityReport fidelity_from_sums(double l1_full, double l1_pruned, double agf_full, double agf_pruned);
// Target-layer sums of |W| and of the AGF utility for both models.
ProxyFidelityReport proxy_fidelity(const Checkpoint& full, const Checkpoint& pruned, const Dataset& data,
                                   const CalibrationConfig& config);

struct EntropyBucketReport {
    std::size_t bins = 0;
    double max_entropy = 0.0;  // ln C
    std::vector<std::size_t> pruned;
    std::vector<std::size_t> full;
};

// -sum p ln p per row of softmax(logits).
std::vector<double> prediction_entropy(const Tensor& logits);
// Histogram of the full model's prediction entropy over [0, ln C], split by
// the route each sample took. Throws ConfigError when bins is 0.
EntropyBucketReport entropy_buckets(const RoutingTrace& trace, const Checkpoint& full, const Dataset& data,
                                    std::size_t bins);

// Tabular exports; byte-deterministic, reals at 17 significant digits.
std::string stability_csv(const StabilityReport& report);
std::string orthogonality_csv(const OrthogonalityReport& report);
std::string proxy_fidelity_csv(const ProxyFidelityReport& report);
std::string entropy_buckets_csv(const EntropyBucketReport& report);

void emit_report(const StabilityReport& report, const std::filesystem::path& path);
void emit_report(const OrthogonalityReport& report, const std::filesystem::path& path);
void emit_report(const ProxyFidelityReport& report, const std::filesystem::path& path);
void emit_report(const EntropyBucketReport& report, const std::filesystem::path& path);
// Nested summaries go out as indented JSON.
void emit_report(const json& report, const std::filesystem::path& path);

}  // namespace agf
