#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "agf/analysis.hpp"
#include "agf/datasets.hpp"
#include "agf/importance.hpp"
#include "agf/trainer.hpp"

namespace agf {

// --- signal cancellation ----------------------------------------------------

struct CancellationDemo {
    std::size_t designated = 0;
    std::vector<double> agf;
    std::vector<double> taylor;
    double agf_median = 0.0;
    double taylor_median = 0.0;
    bool taylor_near_zero = false;  // |net Taylor| < 1e-6
    bool agf_large = false;         // AGF > 0.1
    bool agf_above_median = false;
    bool taylor_below_median = false;

    bool pass() const { return taylor_near_zero && agf_large && agf_above_median && taylor_below_median; }
};

double median(std::vector<double> values);
CancellationDemo run_cancellation_demo(std::uint64_t seed = 0);
// channel,agf,taylor_feature
void write_cancellation_csv(const CancellationDemo& demo, const std::filesystem::path& path);

// --- phase transition -------------------------------------------------------

// A 10-class cluster task with a held-out split and a dense teacher whose
// hidden layer is the pruning target.
struct DemoTask {
    SyntheticSpec data;
    double holdout_fraction = 0.3;
    std::uint64_t split_seed = 5;
    std::size_t hidden = 64;
    std::uint64_t init_seed = 4;
    TrainConfig teacher;

    NetworkSpec network() const;
};

struct PhaseTransitionConfig {
    DemoTask task;
    TrainConfig finetune;
    CalibrationConfig calibration;
    std::size_t k = 4;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    double margin = 0.05;

    static PhaseTransitionConfig defaults();
};

struct VariantResult {
    std::string name;
    std::vector<double> accuracy;  // one per seed, held-out, after fine-tuning
    double mean = 0.0;
    double stddev = 0.0;  // sample standard deviation across seeds
};

struct PhaseTransitionDemo {
    double teacher_accuracy = 0.0;
    std::vector<VariantResult> variants;  // random, l1, agf, scratch
    bool margin_ok = false;
    bool agf_std_ok = false;

    const VariantResult& variant(const std::string& name) const;
    bool pass() const { return margin_ok && agf_std_ok; }
};

PhaseTransitionDemo run_phase_transition_demo(const PhaseTransitionConfig& config);
// variant,seed,accuracy rows followed by variant,mean,stddev summary rows.
void write_phase_transition_csv(const PhaseTransitionDemo& demo, const std::filesystem::path& path);

// --- proxy fidelity ---------------------------------------------------------

struct ProxyFidelityConfig {
    DemoTask task;
    TrainConfig finetune;
    CalibrationConfig calibration;
    std::size_t k = 16;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

    static ProxyFidelityConfig defaults();
};

struct ProxyFidelityDemo {
    ProxyFidelityReport reference;  // ratio arithmetic on published sums
    std::vector<std::uint64_t> seeds;
    std::vector<ProxyFidelityReport> measured;
    bool compressed_every_seed = false;  // AGF ratio < l1 ratio

    bool pass() const { return compressed_every_seed; }
};

// Published sums of the saturated wide network: l1 232682 / 1557 and AGF
// utility 4.89e-4 / 2.29e-5.
ProxyFidelityReport reference_fidelity();
ProxyFidelityDemo run_proxy_fidelity_demo(const ProxyFidelityConfig& config);
// seed,l1_full,l1_pruned,l1_ratio,agf_full,agf_pruned,agf_ratio
void write_proxy_fidelity_demo_csv(const ProxyFidelityDemo& demo, const std::filesystem::path& path);

// Trains the task's teacher and returns it with the (train, held-out) split.
struct TaskRun {
    Dataset train;
    Dataset test;
    Checkpoint teacher;
};
TaskRun prepare_task(const DemoTask& task);

}  // namespace agf
