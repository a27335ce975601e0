#include "agf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "agf/csv.hpp"
#include "agf/errors.hpp"
#include "agf/trainer.hpp"

namespace agf {

double jaccard(const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    const std::set<std::size_t> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t inter = 0;
    for (auto x : sa) inter += sb.count(x);
    return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

StabilityReport stability(Metric metric, const Checkpoint& model, const Dataset& data, std::size_t k,
                          std::size_t trials, std::uint64_t seed, const CalibrationConfig& calibration) {
    if (trials < 2) throw ConfigError("stability needs at least 2 trials");
    data.validate();
    const std::size_t slice = data.size() / trials;
    if (slice == 0) {
        throw ConfigError("dataset of " + std::to_string(data.size()) + " samples cannot fill " +
                          std::to_string(trials) + " disjoint slices");
    }
    const auto order = permutation(data.size(), seed);
    std::vector<std::vector<std::size_t>> selected;
    for (std::size_t t = 0; t < trials; ++t) {
        const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(t * slice),
                                           order.begin() + static_cast<std::ptrdiff_t>((t + 1) * slice));
        CalibrationConfig cfg = calibration;
        if (metric == Metric::Random) cfg.seed = seed + t;
        selected.push_back(select_topk(score_metric(metric, model, data.subset(idx), cfg), k));
    }
    StabilityReport report{to_string(metric), k, trials, {}, 0.0};
    double sum = 0.0;
    for (std::size_t a = 0; a < trials; ++a)
        for (std::size_t b = a + 1; b < trials; ++b) {
            const double j = jaccard(selected[a], selected[b]);
            report.pairs.push_back({a, b, j});
            sum += j;
        }
    report.mean = sum / static_cast<double>(report.pairs.size());
    return report;
}

std::vector<double> min_max_normalize(const std::vector<double>& scores) {
    if (scores.empty()) return {};
    const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
    const double span = *hi - *lo;
    std::vector<double> out(scores.size(), 0.0);
    if (span > 0.0)
        for (std::size_t i = 0; i < scores.size(); ++i) out[i] = (scores[i] - *lo) / span;
    return out;
}

OrthogonalityReport orthogonality(const ChannelScoreTable& a, const ChannelScoreTable& b, std::size_t k) {
    if (a.layer != b.layer || a.width() != b.width()) {
        throw InputError("score tables cover different layers (" + std::to_string(a.layer) + " width " +
                         std::to_string(a.width()) + " vs " + std::to_string(b.layer) + " width " +
                         std::to_string(b.width()) + ")");
    }
    return {a.metric, b.metric, k, jaccard(select_topk(a, k), select_topk(b, k)), min_max_normalize(a.scores),
            min_max_normalize(b.scores)};
}

ProxyFidelityReport fidelity_from_sums(double l1_full, double l1_pruned, double agf_full, double agf_pruned) {
    ProxyFidelityReport r{l1_full, l1_pruned, agf_full, agf_pruned, std::nullopt, std::nullopt};
    if (l1_pruned > 0.0) r.l1_ratio = l1_full / l1_pruned;
    if (agf_pruned > 0.0) r.agf_ratio = agf_full / agf_pruned;
    return r;
}

namespace {

double sum_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

}  // namespace

ProxyFidelityReport proxy_fidelity(const Checkpoint& full, const Checkpoint& pruned, const Dataset& data,
                                   const CalibrationConfig& config) {
    return fidelity_from_sums(sum_of(score_l1(full).scores), sum_of(score_l1(pruned).scores),
                              sum_of(calibrate_agf(full, data, config).scores),
                              sum_of(calibrate_agf(pruned, data, config).scores));
}

std::vector<double> prediction_entropy(const Tensor& logits) {
    const Tensor lp = log_softmax(logits);
    const std::size_t n = lp.dim(0), c = lp.dim(1);
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double h = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double p = std::exp(lp.at(i, j));
            if (p > 0.0) h -= p * lp.at(i, j);
        }
        out[i] = std::clamp(h, 0.0, std::log(static_cast<double>(c)));
    }
    return out;
}

EntropyBucketReport entropy_buckets(const RoutingTrace& trace, const Checkpoint& full, const Dataset& data,
                                    std::size_t bins) {
    if (bins < 1) throw ConfigError("entropy histogram needs at least 1 bin");
    if (trace.samples.size() != data.size()) throw InputError("routing trace and dataset differ in length");
    const auto entropy = prediction_entropy(forward_chunked(full, data.inputs));
    EntropyBucketReport report{bins, std::log(static_cast<double>(full.spec.num_classes())),
                               std::vector<std::size_t>(bins, 0), std::vector<std::size_t>(bins, 0)};
    for (std::size_t i = 0; i < entropy.size(); ++i) {
        std::size_t b = 0;
        if (report.max_entropy > 0.0) {
            b = static_cast<std::size_t>(entropy[i] / report.max_entropy * static_cast<double>(bins));
            b = std::min(b, bins - 1);
        }
        (trace.samples[i].route == Route::Full ? report.full : report.pruned)[b] += 1;
    }
    return report;
}

std::string stability_csv(const StabilityReport& report) {
    CsvWriter w({"metric", "k", "trial_a", "trial_b", "jaccard"});
    for (const auto& p : report.pairs) {
        w.row({report.metric, std::to_string(report.k), std::to_string(p.trial_a), std::to_string(p.trial_b),
               format_real(p.value)});
    }
    return w.str();
}

std::string orthogonality_csv(const OrthogonalityReport& report) {
    CsvWriter w({"channel", "scoreA_norm", "scoreB_norm"});
    for (std::size_t c = 0; c < report.norm_a.size(); ++c)
        w.row({std::to_string(c), format_real(report.norm_a[c]), format_real(report.norm_b[c])});
    return w.str();
}

std::string proxy_fidelity_csv(const ProxyFidelityReport& report) {
    auto ratio = [](const std::optional<double>& r) { return r ? format_real(*r) : std::string("undefined"); };
    CsvWriter w({"proxy", "full", "pruned", "ratio"});
    w.row({"l1", format_real(report.l1_full), format_real(report.l1_pruned), ratio(report.l1_ratio)});
    w.row({"agf", format_real(report.agf_full), format_real(report.agf_pruned), ratio(report.agf_ratio)});
    return w.str();
}

std::string entropy_buckets_csv(const EntropyBucketReport& report) {
    CsvWriter w({"bin", "lower", "upper", "pruned", "full"});
    const double width = report.bins ? report.max_entropy / static_cast<double>(report.bins) : 0.0;
    for (std::size_t b = 0; b < report.bins; ++b) {
        w.row({std::to_string(b), format_real(width * static_cast<double>(b)),
               format_real(b + 1 == report.bins ? report.max_entropy : width * static_cast<double>(b + 1)),
               std::to_string(report.pruned[b]), std::to_string(report.full[b])});
    }
    return w.str();
}

void emit_report(const StabilityReport& report, const std::filesystem::path& path) {
    write_text_file(path, stability_csv(report));
}
void emit_report(const OrthogonalityReport& report, const std::filesystem::path& path) {
    write_text_file(path, orthogonality_csv(report));
}
void emit_report(const ProxyFidelityReport& report, const std::filesystem::path& path) {
    write_text_file(path, proxy_fidelity_csv(report));
}
void emit_report(const EntropyBucketReport& report, const std::filesystem::path& path) {
    write_text_file(path, entropy_buckets_csv(report));
}
void emit_report(const json& report, const std::filesystem::path& path) { write_text_file(path, report.dump(2) + "\n"); }

}  // namespace agf
