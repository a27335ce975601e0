#include "agf/router.hpp"

#include <algorithm>
#include <cmath>

#include "agf/csv.hpp"
#include "agf/errors.hpp"
#include "agf/trainer.hpp"

namespace agf {

std::string to_string(CostModel model) { return model == CostModel::Cascade ? "cascade" : "exclusive"; }

CostModel cost_model_from_string(const std::string& name) {
    if (name == "cascade") return CostModel::Cascade;
    if (name == "exclusive") return CostModel::Exclusive;
    throw ConfigError("unknown cost model '" + name + "'; valid cost models: cascade, exclusive");
}

void RoutingPolicy::validate() const {
    if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("tau must be in [0, 1]");
}

double RoutingTrace::routed_fraction() const {
    if (samples.empty()) return 0.0;
    std::size_t routed = 0;
    for (const auto& s : samples) routed += s.route == Route::Full;
    return static_cast<double>(routed) / static_cast<double>(samples.size());
}

double RoutingTrace::accuracy() const {
    if (samples.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& s : samples) correct += s.correct;
    return static_cast<double>(correct) / static_cast<double>(samples.size());
}

std::vector<double> top1_confidence(const Tensor& logits) {
    const Tensor p = softmax(logits);
    const std::size_t n = p.dim(0), c = p.dim(1);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double best = 0.0;
        for (std::size_t j = 0; j < c; ++j) best = std::max(best, p.at(i, j));
        out[i] = std::min(best, std::nextafter(1.0, 0.0));
    }
    return out;
}

namespace {

struct ExpertOutputs {
    std::vector<double> confidence;
    std::vector<std::size_t> pruned_pred;
    std::vector<std::size_t> full_pred;
};

void check_experts(const Checkpoint& pruned, const Checkpoint& full) {
    if (pruned.spec.num_classes() != full.spec.num_classes()) {
        throw ConfigError("experts disagree on class count: pruned " + std::to_string(pruned.spec.num_classes()) +
                          ", full " + std::to_string(full.spec.num_classes()));
    }
    if (pruned.spec.input_shape != full.spec.input_shape) throw ConfigError("experts disagree on input shape");
}

}  // namespace

RoutingTrace route_cascade(const Checkpoint& pruned, const Checkpoint& full, const Dataset& data, double tau) {
    RoutingPolicy{tau, CostModel::Cascade}.validate();
    check_experts(pruned, full);
    data.validate();
    const Tensor logits = forward_chunked(pruned, data.inputs);
    const auto conf = top1_confidence(logits);
    const auto pred = argmax_rows(logits);

    std::vector<std::size_t> routed;
    for (std::size_t i = 0; i < conf.size(); ++i)
        if (conf[i] < tau) routed.push_back(i);
    std::vector<std::size_t> full_pred;
    if (!routed.empty()) full_pred = predict(full, data.subset(routed).inputs);

    RoutingTrace trace{tau, {}};
    std::size_t r = 0;
    for (std::size_t i = 0; i < conf.size(); ++i) {
        RoutedSample s{conf[i], Route::Pruned, pred[i], data.labels[i], false};
        if (r < routed.size() && routed[r] == i) {
            s.route = Route::Full;
            s.prediction = full_pred[r++];
        }
        s.correct = s.prediction == s.label;
        trace.samples.push_back(s);
    }
    return trace;
}

void write_route_trace_csv(const RoutingTrace& trace, const std::filesystem::path& path) {
    CsvWriter w({"sample", "confidence", "route", "prediction", "label", "correct"});
    for (std::size_t i = 0; i < trace.samples.size(); ++i) {
        const auto& s = trace.samples[i];
        w.row({std::to_string(i), format_real(s.confidence), s.route == Route::Full ? "full" : "pruned",
               std::to_string(s.prediction), std::to_string(s.label), s.correct ? "1" : "0"});
    }
    w.write(path);
}

double cost_cascade(double f, double flops_pruned, double flops_full) {
    if (!(flops_pruned > 0.0)) throw InputError("flops_pruned must be > 0");
    return 1.0 + f * (flops_full / flops_pruned);
}

double cost_exclusive(double f, double c_pruned, double c_full) {
    if (!(c_pruned > 0.0) || !(c_full > 0.0)) throw InputError("expert costs must be > 0");
    return (1.0 - f) * c_pruned + f * c_full;
}

const std::vector<double>& default_tau_grid() {
    static const std::vector<double> grid{0.0, 0.5, 0.7, 0.8, 0.9, 0.95, 0.98, 0.99, 0.999};
    return grid;
}

SweepResult sweep(const Checkpoint& pruned, const Checkpoint& full, const Dataset& data,
                  const std::vector<double>& taus) {
    check_experts(pruned, full);
    data.validate();
    if (!std::is_sorted(taus.begin(), taus.end())) throw ConfigError("tau grid must be sorted ascending");
    for (double t : taus) RoutingPolicy{t, CostModel::Cascade}.validate();

    const Tensor logits = forward_chunked(pruned, data.inputs);
    const auto conf = top1_confidence(logits);
    const auto pruned_pred = argmax_rows(logits);
    const auto full_pred = predict(full, data.inputs);

    SweepResult result;
    result.flops_pruned = static_cast<double>(count_flops(pruned).total);
    result.flops_full = static_cast<double>(count_flops(full).total);
    const double ratio = result.flops_full / result.flops_pruned;
    const double c_pruned = result.flops_pruned / result.flops_full;
    const double n = static_cast<double>(data.size());

    for (double tau : taus) {
        std::size_t routed = 0, correct = 0;
        double cascade_sum = 0.0, exclusive_sum = 0.0;
        for (std::size_t i = 0; i < conf.size(); ++i) {
            const bool to_full = conf[i] < tau;
            routed += to_full;
            correct += (to_full ? full_pred[i] : pruned_pred[i]) == data.labels[i];
            cascade_sum += to_full ? 1.0 + ratio : 1.0;
            exclusive_sum += to_full ? 1.0 : c_pruned;
        }
        SweepRow row;
        row.tau = tau;
        row.accuracy = static_cast<double>(correct) / n;
        row.routed_fraction = static_cast<double>(routed) / n;
        row.cost_cascade = cost_cascade(row.routed_fraction, result.flops_pruned, result.flops_full);
        row.cost_exclusive = cost_exclusive(row.routed_fraction, c_pruned, 1.0);
        row.brute_cascade = cascade_sum / n;
        row.brute_exclusive = exclusive_sum / n;
        result.rows.push_back(row);
    }
    return result;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    CsvWriter w({"tau", "accuracy", "routed_fraction", "cost_cascade", "cost_exclusive"});
    for (const auto& r : rows) {
        w.row({format_real(r.tau), format_real(r.accuracy), format_real(r.routed_fraction), format_real(r.cost_cascade),
               format_real(r.cost_exclusive)});
    }
    return w.str();
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
    write_text_file(path, sweep_csv(rows));
}

std::vector<SweepRow> pareto_front(const std::vector<SweepRow>& rows, CostModel model) {
    auto cost = [model](const SweepRow& r) { return model == CostModel::Cascade ? r.cost_cascade : r.cost_exclusive; };
    std::vector<SweepRow> front;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        bool dominated = false, duplicate = false;
        for (std::size_t j = 0; j < rows.size() && !dominated && !duplicate; ++j) {
            if (i == j) continue;
            const bool acc_ge = rows[j].accuracy >= rows[i].accuracy, cost_le = cost(rows[j]) <= cost(rows[i]);
            const bool strict = rows[j].accuracy > rows[i].accuracy || cost(rows[j]) < cost(rows[i]);
            dominated = acc_ge && cost_le && strict;
            duplicate = !strict && acc_ge && cost_le &&
                        (rows[j].tau < rows[i].tau || (rows[j].tau == rows[i].tau && j < i));
        }
        if (!dominated && !duplicate) front.push_back(rows[i]);
    }
    std::stable_sort(front.begin(), front.end(), [&](const SweepRow& a, const SweepRow& b) {
        return cost(a) != cost(b) ? cost(a) < cost(b) : a.tau < b.tau;
    });
    return front;
}

}  // namespace agf
