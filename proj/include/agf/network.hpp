#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "agf/autodiff.hpp"
#include "agf/tensor.hpp"

namespace agf {

enum class LayerKind { Dense, Conv2d, Relu, Flatten, ResidualMlp };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

// One layer of a sequential network. Which fields matter depends on `kind`:
//   Dense       in -> out
//   Conv2d      in channels -> out channels, kernel, stride, padding
//   ResidualMlp outer width `in` (== out), inner width `hidden`;
//               computes x + W2 relu(W1 x + b1) + b2
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    std::size_t in = 0;
    std::size_t out = 0;
    std::size_t hidden = 0;
    std::size_t kernel = 0;
    std::size_t stride = 1;
    std::size_t padding = 0;

    static LayerSpec dense(std::size_t in, std::size_t out);
    static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                            std::size_t stride = 1, std::size_t padding = 0);
    static LayerSpec relu();
    static LayerSpec flatten();
    static LayerSpec residual_mlp(std::size_t width, std::size_t hidden);

    bool has_parameters() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d || kind == LayerKind::ResidualMlp; }

    friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

// Sequential network plus the layer whose output channels get scored and
// pruned. For a residual block the target is the block's inner layer.
struct NetworkSpec {
    Shape input_shape;  // per sample: {features} or {channels, height, width}
    std::vector<LayerSpec> layers;
    std::size_t target_layer = 0;

    // Throws SpecError on an incompatible chain or an invalid target.
    void validate() const;
    // Per-sample activation shapes; element i is the input of layer i, the
    // last element is the logits shape.
    std::vector<Shape> activation_shapes() const;
    std::size_t num_classes() const;
    // Channel count of the target layer.
    std::size_t target_width() const;
    // Index of the layer after which target channels are read and masked:
    // the target itself, or the ReLU directly following it.
    std::size_t target_activation_layer() const;

    friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct CheckpointMeta {
    std::uint64_t seed = 0;
    std::uint64_t epoch = 0;
    std::uint64_t history_digest = 0;

    friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct ParamInfo {
    std::size_t layer = 0;
    std::string name;
    Shape shape;
};

// Parameter tensors in declaration order: per layer weight then bias; residual
// blocks contribute w1, b1, w2, b2.
std::vector<ParamInfo> parameter_layout(const NetworkSpec& spec);

struct Checkpoint {
    NetworkSpec spec;
    std::vector<Tensor> params;
    CheckpointMeta meta;

    // Index into `params` of the first tensor owned by `layer`.
    std::size_t param_index(std::size_t layer) const;
    std::size_t parameter_count() const;
    // Throws SpecMismatchError when params disagree with the layout.
    void check_shapes() const;

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

// He-normal weights (std sqrt(2 / fan_in)), zero biases.
Checkpoint build(const NetworkSpec& spec, std::uint64_t init_seed);

struct RecordedForward {
    Var logits;
    std::vector<Var> params;
    Var target_input;       // input of the target layer (block input for residual targets)
    Var target_activation;  // post-activation target channels, after masking
};

// Records a forward pass. `keep` (empty = keep all) masks target channels.
// Parameters are recorded as trainable when `params_require_grad`.
RecordedForward forward_on(Trace& trace, const Checkpoint& model, const Tensor& batch,
                           const std::vector<bool>& keep = {}, bool params_require_grad = false);

// Forward over caller-owned parameter handles in layout order.
RecordedForward forward_with(Trace& trace, const NetworkSpec& spec, std::vector<Var> params, const Tensor& batch,
                             const std::vector<bool>& keep = {});

Tensor forward(const Checkpoint& model, const Tensor& batch);
Tensor forward_masked(const Checkpoint& model, const Tensor& batch, const std::set<std::size_t>& zeroed_channels);

struct FlopReport {
    std::vector<std::uint64_t> per_layer;
    std::uint64_t total = 0;
};

FlopReport count_flops(const NetworkSpec& spec);
inline FlopReport count_flops(const Checkpoint& model) { return count_flops(model.spec); }

// Binary checkpoint file; layout documented in docs/checkpoint-format.md.
void save(const Checkpoint& model, const std::filesystem::path& path);
Checkpoint load(const std::filesystem::path& path);
// Load and require the stored spec to equal `expected`.
Checkpoint load_into(const std::filesystem::path& path, const NetworkSpec& expected);

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace agf
