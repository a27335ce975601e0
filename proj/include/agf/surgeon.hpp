#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "agf/json_io.hpp"
#include "agf/network.hpp"

namespace agf {

struct PruneProvenance {
    std::string metric;
    std::size_t k = 0;
    std::uint64_t calibration_seed = 0;

    friend bool operator==(const PruneProvenance&, const PruneProvenance&) = default;
};

struct PruneSpec {
    std::size_t target_layer = 0;
    std::vector<std::size_t> keep;  // strictly ascending
    PruneProvenance provenance;

    // Throws SpecError unless keep is non-empty, strictly ascending and < width.
    void validate(std::size_t width) const;

    friend bool operator==(const PruneSpec&, const PruneSpec&) = default;
};

json to_json(const PruneSpec& spec);
PruneSpec prune_spec_from_json(const json& j, const std::string& context = "prune");
void save_prune_spec(const PruneSpec& spec, const std::filesystem::path& path);
PruneSpec load_prune_spec(const std::filesystem::path& path);

// Layer that reads the target channels, or throws UnsupportedTopologyError
// when the channels would also cross a residual skip.
std::size_t target_consumer(const NetworkSpec& spec);

// Keeps only the target rows in `spec.keep` and the matching consumer inputs.
// Every retained value is copied bitwise.
Checkpoint prune_structural(const Checkpoint& model, const PruneSpec& spec);

// Same architecture as `pruned_spec`, freshly initialized.
Checkpoint scratch_variant(const NetworkSpec& pruned_spec, std::uint64_t seed);

// max |forward(pruned) - forward_masked(full, complement of keep)| over the probe.
double equivalence_check(const Checkpoint& full, const Checkpoint& pruned, const std::vector<std::size_t>& keep,
                         const Tensor& probe_batch);

}  // namespace agf
