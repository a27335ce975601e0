#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "agf/datasets.hpp"
#include "agf/importance.hpp"
#include "agf/network.hpp"
#include "agf/surgeon.hpp"

namespace agf {

enum class Schedule { Cosine, Constant };

std::string to_string(Schedule schedule);
Schedule schedule_from_string(const std::string& name);

struct TrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 32;
    double lr0 = 1e-3;
    double momentum = 0.9;
    bool nesterov = true;
    double weight_decay = 5e-4;
    Schedule schedule = Schedule::Cosine;
    std::uint64_t seed = 0;

    // Throws ConfigError.
    void validate() const;
    double lr_at(std::size_t epoch) const;
};

// Fine-tuning recipe: the training recipe over fewer epochs at a fixed rate.
TrainConfig default_finetune_config();

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;  // mean over samples, measured during the epoch
    double train_acc = 0.0;   // during the epoch, before each batch's update
    double eval_acc = 0.0;    // after the epoch on the eval set

    friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;

    std::size_t size() const { return epochs.size(); }
    // CSV with header epoch,lr,train_loss,train_acc,eval_acc.
    std::string csv() const;
    std::uint64_t digest() const;
};

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);

struct TrainResult {
    Checkpoint model;
    TrainHistory history;
};

// SGD with (Nesterov) momentum and L2 weight decay added to the gradient, on the
// batch-mean cross-entropy. eval_acc uses `eval` when given, else `data`.
// Throws TrainingError when the loss or parameters stop being finite.
TrainResult train(const Checkpoint& model, const Dataset& data, const TrainConfig& config,
                  const Dataset* eval = nullptr);
TrainResult finetune(const Checkpoint& pruned, const Dataset& data, const TrainConfig& config,
                     const Dataset* eval = nullptr);

// Argmax per row, ties to the smallest class index.
std::vector<std::size_t> argmax_rows(const Tensor& logits);
std::vector<std::size_t> predict(const Checkpoint& model, const Tensor& inputs);
// Logits for the whole input tensor, evaluated in fixed-size chunks.
Tensor forward_chunked(const Checkpoint& model, const Tensor& inputs, std::size_t chunk = 256);
// Top-1 accuracy; throws InputError on an empty dataset.
double evaluate(const Checkpoint& model, const Dataset& data);

// Widths visited by an n-step linear sparsity ramp from `width` down to `k`;
// the last entry is always k.
std::vector<std::size_t> sparsity_ramp(std::size_t width, std::size_t k, std::size_t steps);

struct IterativePruneResult {
    Checkpoint model;
    PruneSpec spec;  // keep set in the original model's channel indices
    std::vector<TrainHistory> histories;
};

// Score, prune to the next ramp width and fine-tune, `steps` times. With one
// step this is one-shot prune + fine-tune.
IterativePruneResult iterative_prune(const Checkpoint& model, const Dataset& calib, const Dataset& train_data,
                                     Metric metric, const CalibrationConfig& calibration, std::size_t k,
                                     std::size_t steps, const TrainConfig& finetune_config,
                                     const Dataset* eval = nullptr);

}  // namespace agf
