#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "agf/datasets.hpp"
#include "agf/network.hpp"

namespace agf {

// Calibration pass settings: the first T mini-batches of a seeded pass over
// the calibration set.
struct CalibrationConfig {
    std::size_t T = 8;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    bool shuffle = true;
    // Multiplies the loss before differentiation.
    double loss_scale = 1.0;

    void validate() const;
};

enum class Metric { Agf, TaylorFeature, TaylorParam, L1, Wanda, Ria, Random };

std::string to_string(Metric metric);
// Throws InputError listing the valid names.
Metric metric_from_string(const std::string& name);
const std::vector<std::string>& metric_names();
bool is_data_free(Metric metric);

struct ChannelScoreTable {
    std::string metric;
    std::size_t layer = 0;
    std::vector<double> scores;
    std::size_t T = 0;
    std::uint64_t seed = 0;

    std::size_t width() const { return scores.size(); }
};

// Per-channel means over samples and every element of the channel, for one
// batch. activation and grad are N x C or N x C x H x W.
struct FeatureContribution {
    std::vector<double> mean_abs;     // mean |Y * dL/dY|
    std::vector<double> mean_signed;  // mean  Y * dL/dY
};
FeatureContribution feature_contribution(const Tensor& activation, const Tensor& grad);

// Connection-level kernels over a width x fan_in weight matrix and the l2 norm
// of the input feature feeding each column.
std::vector<double> wanda_kernel(const Tensor& weight, std::span<const double> input_norms);
std::vector<double> ria_kernel(const Tensor& weight, std::span<const double> input_norms, double exponent = 0.5);

// AGF utility and the net feature-space Taylor score from the same calibration
// passes. The loss is summed over the batch so each sample's gradient is its own.
struct FeatureScores {
    ChannelScoreTable agf;
    ChannelScoreTable taylor_feature;
};
FeatureScores calibrate_feature_scores(const Checkpoint& model, const Dataset& data, const CalibrationConfig& config);

ChannelScoreTable calibrate_agf(const Checkpoint& model, const Dataset& data, const CalibrationConfig& config);
ChannelScoreTable score_taylor_feature(const Checkpoint& model, const Dataset& data, const CalibrationConfig& config);
// |sum over the channel's incoming weights of dL/dW * W|, batch-mean loss.
ChannelScoreTable score_taylor_param(const Checkpoint& model, const Dataset& data, const CalibrationConfig& config);
ChannelScoreTable score_l1(const Checkpoint& model);
ChannelScoreTable score_wanda(const Checkpoint& model, const Dataset& data, const CalibrationConfig& config);
ChannelScoreTable score_ria(const Checkpoint& model, const Dataset& data, const CalibrationConfig& config,
                            double exponent = 0.5);
ChannelScoreTable score_random(const Checkpoint& model, std::uint64_t seed);

// Dispatch. Data-free metrics ignore `data`; random uses config.seed.
ChannelScoreTable score_metric(Metric metric, const Checkpoint& model, const Dataset& data,
                               const CalibrationConfig& config);

// Indices of the k largest scores, ties to the smaller index, sorted ascending.
std::vector<std::size_t> select_topk(const ChannelScoreTable& table, std::size_t k);

// Target-layer weights viewed as width x fan_in (bias excluded).
Tensor target_weight_matrix(const Checkpoint& model);

// CSV with header metric,layer,channel,score.
void write_score_csv(const ChannelScoreTable& table, const std::filesystem::path& path);
ChannelScoreTable read_score_csv(const std::filesystem::path& path);

}  // namespace agf
