#include "agf/surgeon.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "agf/csv.hpp"
#include "agf/errors.hpp"

namespace agf {

void PruneSpec::validate(std::size_t width) const {
    if (keep.empty()) throw SpecError("keep set is empty");
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (keep[i] >= width) {
            throw SpecError("keep index " + std::to_string(keep[i]) + " out of range for target width " +
                            std::to_string(width));
        }
        if (i > 0 && keep[i] <= keep[i - 1]) throw SpecError("keep set must be strictly ascending");
    }
}

json to_json(const PruneSpec& spec) {
    return json{{"target_layer", spec.target_layer},
                {"keep", spec.keep},
                {"provenance",
                 {{"metric", spec.provenance.metric},
                  {"k", spec.provenance.k},
                  {"calibration_seed", spec.provenance.calibration_seed}}}};
}

PruneSpec prune_spec_from_json(const json& j, const std::string& context) {
    PruneSpec spec;
    spec.target_layer = require_size(j, "target_layer", context);
    const json& keep = require_field(j, "keep", context);
    if (!keep.is_array()) throw ConfigError(context + ".keep must be an array");
    for (const auto& v : keep) {
        if (!v.is_number_unsigned()) throw ConfigError(context + ".keep must hold non-negative integers");
        spec.keep.push_back(v.get<std::size_t>());
    }
    const json& prov = require_field(j, "provenance", context);
    const std::string pctx = context + ".provenance";
    const json& metric = require_field(prov, "metric", pctx);
    if (!metric.is_string()) throw ConfigError(pctx + ".metric must be a string");
    spec.provenance.metric = metric.get<std::string>();
    spec.provenance.k = require_size(prov, "k", pctx);
    spec.provenance.calibration_seed = require_size(prov, "calibration_seed", pctx);
    return spec;
}

void save_prune_spec(const PruneSpec& spec, const std::filesystem::path& path) {
    write_text_file(path, to_json(spec).dump(2) + "\n");
}

PruneSpec load_prune_spec(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what(), e.byte, FormatError::Unit::Byte);
    }
    return prune_spec_from_json(j, path.filename().string());
}

std::size_t target_consumer(const NetworkSpec& spec) {
    spec.validate();
    const std::size_t t = spec.target_layer;
    if (spec.layers[t].kind == LayerKind::ResidualMlp) return t;
    for (std::size_t i = t + 1; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (l.kind == LayerKind::ResidualMlp) {
            throw UnsupportedTopologyError("target layer " + std::to_string(t) +
                                           " feeds a residual block; its channels reach both the block and the skip");
        }
        if (l.has_parameters()) return i;
    }
    throw SpecError("target layer has no consumer");
}

namespace {

// Copies rows (axis 0 blocks) of `t` listed in `rows`.
Tensor take_rows(const Tensor& t, const std::vector<std::size_t>& rows) {
    Shape shape = t.shape();
    const std::size_t block = t.numel() / shape[0];
    shape[0] = rows.size();
    Tensor out(shape);
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(rows[r] * block), block,
                    out.data().begin() + static_cast<std::ptrdiff_t>(r * block));
    return out;
}

// Copies, within each row, the column blocks of width `span` listed in `cols`.
// Works for dense (span 1, columns = inputs), flattened conv outputs
// (span = H*W) and conv kernels (span = kh*kw over input channels).
Tensor take_column_blocks(const Tensor& t, const std::vector<std::size_t>& cols, std::size_t span) {
    const std::size_t rows = t.dim(0);
    const std::size_t row_len = t.numel() / rows;
    const std::size_t new_len = cols.size() * span;
    Tensor out({rows, new_len});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols.size(); ++c)
            std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(r * row_len + cols[c] * span), span,
                        out.data().begin() + static_cast<std::ptrdiff_t>(r * new_len + c * span));
    return out;
}

}  // namespace

Checkpoint prune_structural(const Checkpoint& model, const PruneSpec& spec) {
    model.spec.validate();
    model.check_shapes();
    if (spec.target_layer != model.spec.target_layer) {
        throw SpecError("prune spec targets layer " + std::to_string(spec.target_layer) + " but the model targets " +
                        std::to_string(model.spec.target_layer));
    }
    spec.validate(model.spec.target_width());
    const std::size_t t = spec.target_layer;
    const std::size_t consumer = target_consumer(model.spec);
    const std::size_t k = spec.keep.size();

    Checkpoint out = model;
    LayerSpec& target = out.spec.layers[t];
    const std::size_t p = model.param_index(t);

    if (target.kind == LayerKind::ResidualMlp) {
        out.params[p] = take_rows(model.params[p], spec.keep);
        out.params[p + 1] = take_rows(model.params[p + 1], spec.keep);
        out.params[p + 2] = take_column_blocks(model.params[p + 2], spec.keep, 1);
        target.hidden = k;
    } else {
        out.params[p] = take_rows(model.params[p], spec.keep);
        out.params[p + 1] = take_rows(model.params[p + 1], spec.keep);
        target.out = k;

        LayerSpec& cons = out.spec.layers[consumer];
        const std::size_t q = model.param_index(consumer);
        const Tensor& w = model.params[q];
        if (cons.kind == LayerKind::Conv2d) {
            const std::size_t span = cons.kernel * cons.kernel;
            out.params[q] = take_column_blocks(w, spec.keep, span).reshaped({cons.out, k, cons.kernel, cons.kernel});
            cons.in = k;
        } else {
            // A dense consumer reads either the channels directly or a flattened
            // C x H x W map, in which case each channel owns H*W consecutive columns.
            const std::size_t span = cons.in / model.spec.target_width();
            out.params[q] = take_column_blocks(w, spec.keep, span);
            cons.in = k * span;
        }
    }
    out.spec.validate();
    out.check_shapes();
    return out;
}

Checkpoint scratch_variant(const NetworkSpec& pruned_spec, std::uint64_t seed) { return build(pruned_spec, seed); }

double equivalence_check(const Checkpoint& full, const Checkpoint& pruned, const std::vector<std::size_t>& keep,
                         const Tensor& probe_batch) {
    const std::size_t width = full.spec.target_width();
    std::set<std::size_t> removed;
    for (std::size_t c = 0; c < width; ++c) removed.insert(c);
    for (auto c : keep) removed.erase(c);
    return max_abs_diff(forward(pruned, probe_batch), forward_masked(full, probe_batch, removed));
}

}  // namespace agf
