#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "agf/analysis.hpp"
#include "agf/datasets.hpp"
#include "agf/importance.hpp"
#include "agf/json_io.hpp"
#include "agf/network.hpp"
#include "agf/router.hpp"
#include "agf/trainer.hpp"

namespace agf {

inline constexpr int kRunConfigVersion = 1;

enum class DatasetKind { GaussianClusters, Csv, Idx };

struct DatasetConfig {
    DatasetKind kind = DatasetKind::GaussianClusters;
    SyntheticSpec synthetic;
    double holdout_fraction = 0.3;
    std::uint64_t split_seed = 0;
    // csv: train/test files; idx: image/label file pairs. Relative paths are
    // resolved against the config file's directory.
    std::filesystem::path train;
    std::filesystem::path test;
    std::filesystem::path train_labels;
    std::filesystem::path test_labels;
    std::size_t num_classes = 0;
};

struct RoutingConfig {
    std::vector<double> taus = default_tau_grid();
    double tau = 0.9;
    CostModel cost_model = CostModel::Cascade;
};

struct AnalysisConfig {
    std::size_t trials = 3;
    std::uint64_t seed = 0;
    std::size_t entropy_bins = 10;
    Metric compare = Metric::L1;
};

struct RunConfig {
    DatasetConfig dataset;
    NetworkSpec network;
    std::uint64_t init_seed = 0;
    TrainConfig train;
    TrainConfig finetune = default_finetune_config();
    CalibrationConfig calibration;
    Metric metric = Metric::Agf;
    std::size_t k = 1;
    std::size_t ramp_steps = 1;
    RoutingConfig routing;
    AnalysisConfig analysis;
    std::filesystem::path output_dir = "run";

    // Throws ConfigError / SpecError.
    void validate() const;
};

// Every field except the optional sections' members is required; errors name
// the missing field.
RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir = {});
json to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

// output_dir, placed under $AGF_OUTPUT_ROOT when it is set and output_dir is relative.
std::filesystem::path resolve_output_dir(const RunConfig& config);

struct Splits {
    Dataset train;
    Dataset test;
};
Splits load_splits(const DatasetConfig& config);

// Artifact names inside the output directory.
namespace artifact {
inline const std::string teacher = "teacher.ckpt";
inline const std::string teacher_history = "teacher_history.csv";
inline const std::string pruned = "pruned.ckpt";
inline const std::string prune_spec = "pruned.prune.json";
inline const std::string finetuned = "finetuned.ckpt";
inline const std::string finetune_history = "finetune_history.csv";
inline const std::string route_trace = "route_trace.csv";
inline const std::string sweep = "sweep.csv";
inline const std::string pareto = "pareto.csv";
inline const std::string stability = "stability.csv";
inline const std::string orthogonality = "orthogonality.csv";
inline const std::string proxy_fidelity = "proxy_fidelity.csv";
inline const std::string entropy_buckets = "entropy_buckets.csv";
inline const std::string summary = "analysis_summary.json";
std::string scores(Metric metric);
}  // namespace artifact

// Throws DependencyError naming the file when it is absent.
std::filesystem::path require_artifact(const std::filesystem::path& dir, const std::string& name);

// Stages. Each reads its inputs from `out` and writes its artifacts there.
TrainResult stage_train_teacher(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);
ChannelScoreTable stage_calibrate(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);
Checkpoint stage_prune(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);
TrainResult stage_finetune(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);
RoutingTrace stage_route(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);
SweepResult stage_sweep(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);

struct AnalysisResult {
    StabilityReport stability;
    OrthogonalityReport orthogonality;
    ProxyFidelityReport proxy_fidelity;
    EntropyBucketReport entropy;
};
AnalysisResult stage_analyze(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);

// All stages in order.
void run_pipeline(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);

}  // namespace agf
