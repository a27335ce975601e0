#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "agf/network.hpp"
#include "agf/tensor.hpp"

namespace agf {

struct Dataset {
    Tensor inputs;  // N x sample shape
    std::vector<std::size_t> labels;
    std::size_t num_classes = 0;

    std::size_t size() const { return labels.size(); }
    Shape sample_shape() const;
    // Throws InputError unless N >= 1, inputs and labels agree and labels < num_classes.
    void validate() const;
    Dataset subset(std::span<const std::size_t> indices) const;
};

struct SyntheticSpec {
    std::size_t num_classes = 10;
    std::size_t dim = 32;
    std::size_t samples_per_class = 100;
    double cluster_separation = 4.0;
    double noise_sigma = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// Class means on a sphere of radius `cluster_separation`; samples are
// mean + N(0, sigma^2 I). Samples are interleaved by class.
Dataset gen_gaussian_clusters(const SyntheticSpec& spec);

// Two-class data and a fixed one-hidden-layer network in which
// `designated_channel` has large per-sample contributions Y * dL/dY whose sign
// flips between the two mirrored halves of the data.
struct CancellationProbe {
    Dataset data;
    Checkpoint model;
    std::size_t designated_channel = 0;
    std::string note;
};

CancellationProbe gen_cancellation_probe(std::uint64_t seed, std::size_t pairs = 32);
// Indices of the samples with label `label` (the two mirrored halves of the probe
// are its label classes).
std::vector<std::size_t> indices_with_label(const Dataset& ds, std::size_t label);

// CSV rows: label,feat0,feat1,... (no header). num_classes 0 infers max label + 1.
Dataset load_csv(const std::filesystem::path& path, std::size_t num_classes = 0);
void save_csv(const Dataset& ds, const std::filesystem::path& path);
// IDX images (magic 0x00000803, u8 pixels scaled to [0,1], shape N x 1 x rows x cols)
// and labels (magic 0x00000801).
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 std::size_t num_classes = 0);

struct Batch {
    Tensor inputs;
    std::vector<std::size_t> labels;
    std::vector<std::size_t> indices;
};

// Independent sub-seed for stream `stream` of `seed` (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Seeded permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed);
// Index lists of each batch; the final partial batch is kept.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    bool shuffle);
Batch make_batch(const Dataset& ds, std::vector<std::size_t> indices);
std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, bool shuffle);

// Stratified split: `holdout_fraction` of every class goes to the second set.
std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, double holdout_fraction, std::uint64_t seed);

}  // namespace agf
