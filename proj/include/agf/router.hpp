#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "agf/datasets.hpp"
#include "agf/network.hpp"

namespace agf {

enum class CostModel { Cascade, Exclusive };

std::string to_string(CostModel model);
CostModel cost_model_from_string(const std::string& name);

struct RoutingPolicy {
    double tau = 0.9;
    CostModel cost_model = CostModel::Cascade;

    void validate() const;
};

enum class Route { Pruned, Full };

struct RoutedSample {
    double confidence = 0.0;  // max softmax of the pruned expert, always < 1
    Route route = Route::Pruned;
    std::size_t prediction = 0;
    std::size_t label = 0;
    bool correct = false;
};

struct RoutingTrace {
    double tau = 0.0;
    std::vector<RoutedSample> samples;  // dataset order

    double routed_fraction() const;
    double accuracy() const;
};

// Max softmax per row. A value that would round to exactly 1 is stored as the
// largest double below 1, so tau = 1 routes every sample.
std::vector<double> top1_confidence(const Tensor& logits);

// Runs the pruned expert on everything and the full expert on samples whose
// confidence is strictly below tau. Throws ConfigError on a class-count mismatch.
RoutingTrace route_cascade(const Checkpoint& pruned, const Checkpoint& full, const Dataset& data, double tau);
void write_route_trace_csv(const RoutingTrace& trace, const std::filesystem::path& path);

// 1 + f * flops_full / flops_pruned.
double cost_cascade(double f, double flops_pruned, double flops_full);
// (1 - f) * c_pruned + f * c_full.
double cost_exclusive(double f, double c_pruned, double c_full);

struct SweepRow {
    double tau = 0.0;
    double accuracy = 0.0;
    double routed_fraction = 0.0;
    double cost_cascade = 0.0;
    double cost_exclusive = 0.0;
    // Per-sample accumulated costs, for checking against the closed forms.
    double brute_cascade = 0.0;
    double brute_exclusive = 0.0;
};

struct SweepResult {
    double flops_pruned = 0.0;
    double flops_full = 0.0;
    std::vector<SweepRow> rows;
};

const std::vector<double>& default_tau_grid();

// One row per tau (ascending). Exclusive costs use c_pruned = flops_pruned /
// flops_full and c_full = 1.
SweepResult sweep(const Checkpoint& pruned, const Checkpoint& full, const Dataset& data, const std::vector<double>& taus);
// Header tau,accuracy,routed_fraction,cost_cascade,cost_exclusive.
std::string sweep_csv(const std::vector<SweepRow>& rows);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

// Rows not dominated under the chosen cost; duplicates keep the lowest tau.
// Sorted by cost, then tau.
std::vector<SweepRow> pareto_front(const std::vector<SweepRow>& rows, CostModel model = CostModel::Cascade);

}  // namespace agf
