#include "agf/json_io.hpp"

#include "agf/errors.hpp"

namespace agf {

const json& require_field(const json& object, const std::string& key, const std::string& context) {
    if (!object.is_object() || !object.contains(key)) {
        throw ConfigError("missing field '" + context + "." + key + "'");
    }
    return object.at(key);
}

std::size_t require_size(const json& object, const std::string& key, const std::string& context) {
    const json& v = require_field(object, key, context);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
        throw ConfigError("field '" + context + "." + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
}

double require_real(const json& object, const std::string& key, const std::string& context) {
    const json& v = require_field(object, key, context);
    if (!v.is_number()) throw ConfigError("field '" + context + "." + key + "' must be a number");
    return v.get<double>();
}

json to_json(const NetworkSpec& spec) {
    json layers = json::array();
    for (const auto& l : spec.layers) {
        json jl{{"kind", to_string(l.kind)}};
        switch (l.kind) {
            case LayerKind::Dense:
                jl["in"] = l.in;
                jl["out"] = l.out;
                break;
            case LayerKind::Conv2d:
                jl["in"] = l.in;
                jl["out"] = l.out;
                jl["kernel"] = l.kernel;
                jl["stride"] = l.stride;
                jl["padding"] = l.padding;
                break;
            case LayerKind::ResidualMlp:
                jl["width"] = l.in;
                jl["hidden"] = l.hidden;
                break;
            case LayerKind::Relu:
            case LayerKind::Flatten: break;
        }
        layers.push_back(std::move(jl));
    }
    return json{{"input_shape", spec.input_shape}, {"layers", std::move(layers)}, {"target_layer", spec.target_layer}};
}

NetworkSpec network_spec_from_json(const json& j, const std::string& context) {
    NetworkSpec spec;
    const json& shape = require_field(j, "input_shape", context);
    if (!shape.is_array()) throw ConfigError("field '" + context + ".input_shape' must be an array");
    for (const auto& d : shape) {
        if (!d.is_number_unsigned()) throw ConfigError("field '" + context + ".input_shape' must hold integers");
        spec.input_shape.push_back(d.get<std::size_t>());
    }
    const json& layers = require_field(j, "layers", context);
    if (!layers.is_array()) throw ConfigError("field '" + context + ".layers' must be an array");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const json& jl = layers[i];
        const std::string ctx = context + ".layers[" + std::to_string(i) + "]";
        const auto& kind_field = require_field(jl, "kind", ctx);
        if (!kind_field.is_string()) throw ConfigError("field '" + ctx + ".kind' must be a string");
        LayerKind kind;
        try {
            kind = layer_kind_from_string(kind_field.get<std::string>());
        } catch (const SpecError& e) {
            throw ConfigError(ctx + ": " + e.what());
        }
        switch (kind) {
            case LayerKind::Dense:
                spec.layers.push_back(LayerSpec::dense(require_size(jl, "in", ctx), require_size(jl, "out", ctx)));
                break;
            case LayerKind::Conv2d:
                spec.layers.push_back(LayerSpec::conv2d(require_size(jl, "in", ctx), require_size(jl, "out", ctx),
                                                        require_size(jl, "kernel", ctx),
                                                        jl.contains("stride") ? require_size(jl, "stride", ctx) : 1,
                                                        jl.contains("padding") ? require_size(jl, "padding", ctx) : 0));
                break;
            case LayerKind::Relu: spec.layers.push_back(LayerSpec::relu()); break;
            case LayerKind::Flatten: spec.layers.push_back(LayerSpec::flatten()); break;
            case LayerKind::ResidualMlp:
                spec.layers.push_back(
                    LayerSpec::residual_mlp(require_size(jl, "width", ctx), require_size(jl, "hidden", ctx)));
                break;
        }
    }
    spec.target_layer = require_size(j, "target_layer", context);
    return spec;
}

json checkpoint_header_json(const NetworkSpec& spec, const CheckpointMeta& meta) {
    return json{{"format", "agf-checkpoint"},
                {"spec", to_json(spec)},
                {"meta", {{"seed", meta.seed}, {"epoch", meta.epoch}, {"history_digest", meta.history_digest}}}};
}

std::pair<NetworkSpec, CheckpointMeta> checkpoint_header_from_json(const json& j) {
    if (require_field(j, "format", "header") != "agf-checkpoint") throw ConfigError("not an agf checkpoint header");
    NetworkSpec spec = network_spec_from_json(require_field(j, "spec", "header"), "header.spec");
    const json& m = require_field(j, "meta", "header");
    CheckpointMeta meta;
    meta.seed = require_field(m, "seed", "header.meta").get<std::uint64_t>();
    meta.epoch = require_field(m, "epoch", "header.meta").get<std::uint64_t>();
    meta.history_digest = require_field(m, "history_digest", "header.meta").get<std::uint64_t>();
    return {std::move(spec), meta};
}

}  // namespace agf
