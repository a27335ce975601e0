#include "agf/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "agf/csv.hpp"
#include "agf/errors.hpp"

namespace agf {

void CalibrationConfig::validate() const {
    if (T < 1) throw ConfigError("calibration T must be >= 1");
    if (batch_size < 1) throw ConfigError("calibration batch_size must be >= 1");
    if (!std::isfinite(loss_scale)) throw ConfigError("loss_scale must be finite");
}

const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names{"agf", "taylor_feature", "taylor_param", "l1", "wanda", "ria", "random"};
    return names;
}

std::string to_string(Metric metric) { return metric_names().at(static_cast<std::size_t>(metric)); }

Metric metric_from_string(const std::string& name) {
    const auto& names = metric_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return static_cast<Metric>(i);
    std::string valid;
    for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
    throw InputError("unknown metric '" + name + "'; valid metrics: " + valid);
}

bool is_data_free(Metric metric) { return metric == Metric::L1 || metric == Metric::Random; }

FeatureContribution feature_contribution(const Tensor& activation, const Tensor& grad) {
    if (activation.shape() != grad.shape() || activation.rank() < 2) {
        throw ShapeError("activation " + shape_str(activation.shape()) + " and gradient " + shape_str(grad.shape()) +
                         " must match");
    }
    const std::size_t n = activation.dim(0), c = activation.dim(1);
    const std::size_t spatial = activation.numel() / (n * c);
    FeatureContribution out{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
    const double count = static_cast<double>(n * spatial);
    for (std::size_t ch = 0; ch < c; ++ch) {
        double abs_sum = 0.0, signed_sum = 0.0;
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t p = 0; p < spatial; ++p) {
                const std::size_t i = (s * c + ch) * spatial + p;
                const double v = activation[i] * grad[i];
                abs_sum += std::abs(v);
                signed_sum += v;
            }
        out.mean_abs[ch] = abs_sum / count;
        out.mean_signed[ch] = signed_sum / count;
    }
    return out;
}

namespace {

void require_weight_matrix(const Tensor& weight, std::span<const double> input_norms) {
    if (weight.rank() != 2 || weight.dim(1) != input_norms.size()) {
        throw ShapeError("weight " + shape_str(weight.shape()) + " does not match " +
                         std::to_string(input_norms.size()) + " input norms");
    }
}

}  // namespace

std::vector<double> wanda_kernel(const Tensor& weight, std::span<const double> input_norms) {
    require_weight_matrix(weight, input_norms);
    std::vector<double> scores(weight.dim(0), 0.0);
    for (std::size_t c = 0; c < weight.dim(0); ++c)
        for (std::size_t j = 0; j < weight.dim(1); ++j) scores[c] += std::abs(weight.at(c, j)) * input_norms[j];
    return scores;
}

std::vector<double> ria_kernel(const Tensor& weight, std::span<const double> input_norms, double exponent) {
    require_weight_matrix(weight, input_norms);
    const std::size_t rows = weight.dim(0), cols = weight.dim(1);
    std::vector<double> row_sum(rows, 0.0), col_sum(cols, 0.0);
    for (std::size_t c = 0; c < rows; ++c)
        for (std::size_t j = 0; j < cols; ++j) {
            const double a = std::abs(weight.at(c, j));
            row_sum[c] += a;
            col_sum[j] += a;
        }
    std::vector<double> scores(rows, 0.0);
    for (std::size_t c = 0; c < rows; ++c)
        for (std::size_t j = 0; j < cols; ++j) {
            const double a = std::abs(weight.at(c, j));
            const double relative = (col_sum[j] > 0.0 ? a / col_sum[j] : 0.0) + (row_sum[c] > 0.0 ? a / row_sum[c] : 0.0);
            scores[c] += relative * std::pow(input_norms[j], exponent);
        }
    return scores;
}

Tensor target_weight_matrix(const Checkpoint& model) {
    const Tensor& w = model.params.at(model.param_index(model.spec.target_layer));
    return w.reshaped({w.dim(0), w.numel() / w.dim(0)});
}

namespace {

std::vector<Batch> calibration_batches(const Dataset& data, const CalibrationConfig& config) {
    config.validate();
    data.validate();
    auto all = batches(data, config.batch_size, config.seed, config.shuffle);
    if (config.T > all.size()) {
        throw ConfigError("calibration needs T=" + std::to_string(config.T) + " batches but the dataset yields only " +
                          std::to_string(all.size()) + " of size " + std::to_string(config.batch_size));
    }
    all.resize(config.T);
    return all;
}

ChannelScoreTable make_table(Metric metric, const Checkpoint& model, std::vector<double> scores, std::size_t T,
                             std::uint64_t seed) {
    return ChannelScoreTable{to_string(metric), model.spec.target_layer, std::move(scores), T, seed};
}

void check_target(const Checkpoint& model) {
    model.spec.validate();
    model.check_shapes();
}

// Per-column l2 norms of the target layer input over the calibration batches.
std::vector<double> target_input_norms(const Checkpoint& model, const std::vector<Batch>& calib) {
    const LayerSpec& layer = model.spec.layers[model.spec.target_layer];
    std::vector<double> sq;
    for (const auto& b : calib) {
        Trace trace;
        const auto rec = forward_on(trace, model, b.inputs);
        const Tensor& x = rec.target_input.value();
        const std::size_t n = x.dim(0), c = x.dim(1);
        const std::size_t spatial = x.numel() / (n * c);
        if (sq.empty()) sq.assign(c, 0.0);
        for (std::size_t ch = 0; ch < c; ++ch) {
            double acc = 0.0;
            for (std::size_t s = 0; s < n; ++s)
                for (std::size_t p = 0; p < spatial; ++p) {
                    const double v = x[(s * c + ch) * spatial + p];
                    acc += v * v;
                }
            sq[ch] += acc;
        }
    }
    std::vector<double> norms;
    const std::size_t taps = layer.kind == LayerKind::Conv2d ? layer.kernel * layer.kernel : 1;
    for (double s : sq)
        for (std::size_t t = 0; t < taps; ++t) norms.push_back(std::sqrt(s));
    return norms;
}

}  // namespace

FeatureScores calibrate_feature_scores(const Checkpoint& model, const Dataset& data, const CalibrationConfig& config) {
    check_target(model);
    const auto calib = calibration_batches(data, config);
    const std::size_t width = model.spec.target_width();
    std::vector<double> abs_acc(width, 0.0), signed_acc(width, 0.0);
    // Batches are weighted equally and reduced in ascending batch order.
    for (const auto& b : calib) {
        Trace trace;
        const auto rec = forward_on(trace, model, b.inputs, {}, /*params_require_grad=*/true);
        trace.retain_grad(rec.target_activation);
        Var loss = cross_entropy(rec.logits, b.labels, Reduction::Sum);
        if (config.loss_scale != 1.0) loss = scale(loss, config.loss_scale);
        const GradientStore grads = trace.backward(loss);
        const auto contrib = feature_contribution(rec.target_activation.value(), grads.of(rec.target_activation));
        for (std::size_t c = 0; c < width; ++c) {
            abs_acc[c] += contrib.mean_abs[c];
            signed_acc[c] += contrib.mean_signed[c];
        }
    }
    const double t = static_cast<double>(calib.size());
    for (std::size_t c = 0; c < width; ++c) {
        abs_acc[c] /= t;
        signed_acc[c] = std::abs(signed_acc[c] / t);
    }
    return {make_table(Metric::Agf, model, std::move(abs_acc), config.T, config.seed),
            make_table(Metric::TaylorFeature, model, std::move(signed_acc), config.T, config.seed)};
}

ChannelScoreTable calibrate_agf(const Checkpoint& model, const Dataset& data, const CalibrationConfig& config) {
    return calibrate_feature_scores(model, data, config).agf;
}

ChannelScoreTable score_taylor_feature(const Checkpoint& model, const Dataset& data, const CalibrationConfig& config) {
    return calibrate_feature_scores(model, data, config).taylor_feature;
}

ChannelScoreTable score_taylor_param(const Checkpoint& model, const Dataset& data, const CalibrationConfig& config) {
    check_target(model);
    const auto calib = calibration_batches(data, config);
    const std::size_t weight_index = model.param_index(model.spec.target_layer);
    const std::size_t width = model.spec.target_width();
    const Tensor& w = model.params[weight_index];
    const std::size_t fan_in = w.numel() / width;
    std::vector<double> acc(width, 0.0);
    for (const auto& b : calib) {
        Trace trace;
        const auto rec = forward_on(trace, model, b.inputs, {}, /*params_require_grad=*/true);
        Var loss = cross_entropy(rec.logits, b.labels, Reduction::Mean);
        if (config.loss_scale != 1.0) loss = scale(loss, config.loss_scale);
        const GradientStore grads = trace.backward(loss);
        const Tensor& g = grads.of(rec.params[weight_index]);
        for (std::size_t c = 0; c < width; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < fan_in; ++j) s += g[c * fan_in + j] * w[c * fan_in + j];
            acc[c] += s;
        }
    }
    for (auto& v : acc) v = std::abs(v / static_cast<double>(calib.size()));
    return make_table(Metric::TaylorParam, model, std::move(acc), config.T, config.seed);
}

ChannelScoreTable score_l1(const Checkpoint& model) {
    check_target(model);
    const Tensor w = target_weight_matrix(model);
    std::vector<double> scores(w.dim(0), 0.0);
    for (std::size_t c = 0; c < w.dim(0); ++c)
        for (std::size_t j = 0; j < w.dim(1); ++j) scores[c] += std::abs(w.at(c, j));
    return make_table(Metric::L1, model, std::move(scores), 0, 0);
}

ChannelScoreTable score_wanda(const Checkpoint& model, const Dataset& data, const CalibrationConfig& config) {
    check_target(model);
    const auto norms = target_input_norms(model, calibration_batches(data, config));
    return make_table(Metric::Wanda, model, wanda_kernel(target_weight_matrix(model), norms), config.T, config.seed);
}

ChannelScoreTable score_ria(const Checkpoint& model, const Dataset& data, const CalibrationConfig& config,
                            double exponent) {
    check_target(model);
    const auto norms = target_input_norms(model, calibration_batches(data, config));
    return make_table(Metric::Ria, model, ria_kernel(target_weight_matrix(model), norms, exponent), config.T,
                      config.seed);
}

ChannelScoreTable score_random(const Checkpoint& model, std::uint64_t seed) {
    check_target(model);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::vector<double> scores(model.spec.target_width());
    for (auto& s : scores) s = uniform(rng);
    return make_table(Metric::Random, model, std::move(scores), 0, seed);
}

ChannelScoreTable score_metric(Metric metric, const Checkpoint& model, const Dataset& data,
                               const CalibrationConfig& config) {
    switch (metric) {
        case Metric::Agf: return calibrate_agf(model, data, config);
        case Metric::TaylorFeature: return score_taylor_feature(model, data, config);
        case Metric::TaylorParam: return score_taylor_param(model, data, config);
        case Metric::L1: return score_l1(model);
        case Metric::Wanda: return score_wanda(model, data, config);
        case Metric::Ria: return score_ria(model, data, config);
        case Metric::Random: return score_random(model, config.seed);
    }
    throw InputError("unknown metric");
}

std::vector<std::size_t> select_topk(const ChannelScoreTable& table, std::size_t k) {
    const std::size_t width = table.width();
    if (k < 1 || k > width) {
        throw InputError("k=" + std::to_string(k) + " out of range [1, " + std::to_string(width) + "]");
    }
    std::vector<std::size_t> order(width);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return table.scores[a] > table.scores[b]; });
    order.resize(k);
    std::sort(order.begin(), order.end());
    return order;
}

void write_score_csv(const ChannelScoreTable& table, const std::filesystem::path& path) {
    CsvWriter csv({"metric", "layer", "channel", "score"});
    for (std::size_t c = 0; c < table.width(); ++c) {
        csv.row({table.metric, std::to_string(table.layer), std::to_string(c), format_real(table.scores[c])});
    }
    csv.write(path);
}

ChannelScoreTable read_score_csv(const std::filesystem::path& path) {
    const CsvTable csv = read_csv_table(path);
    const std::size_t metric_col = csv.column("metric"), layer_col = csv.column("layer");
    const std::size_t channel_col = csv.column("channel"), score_col = csv.column("score");
    ChannelScoreTable table;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& row = csv.rows[r];
        try {
            if (r == 0) {
                table.metric = row[metric_col];
                table.layer = parse_index(row[layer_col]);
            }
            if (parse_index(row[channel_col]) != r || row[metric_col] != table.metric ||
                parse_index(row[layer_col]) != table.layer) {
                throw InputError("rows must list channels 0..n-1 of one metric and layer");
            }
            table.scores.push_back(parse_real(row[score_col]));
        } catch (const InputError& e) {
            throw FormatError(path.string() + ": " + e.what(), r + 2, FormatError::Unit::Line);
        }
    }
    if (table.scores.empty()) throw FormatError(path.string() + ": no score rows", 2, FormatError::Unit::Line);
    return table;
}

}  // namespace agf
