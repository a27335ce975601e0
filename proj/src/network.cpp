#include "agf/network.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <random>
#include <tuple>

#include "agf/errors.hpp"
#include "agf/json_io.hpp"

namespace agf {

std::string to_string(LayerKind kind) {
    switch (kind) {
        case LayerKind::Dense: return "dense";
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::ResidualMlp: return "residual_mlp_block";
    }
    return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
    if (name == "dense") return LayerKind::Dense;
    if (name == "conv2d") return LayerKind::Conv2d;
    if (name == "relu") return LayerKind::Relu;
    if (name == "flatten") return LayerKind::Flatten;
    if (name == "residual_mlp_block") return LayerKind::ResidualMlp;
    throw SpecError("unknown layer kind '" + name + "'");
}

LayerSpec LayerSpec::dense(std::size_t in, std::size_t out) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.in = in;
    l.out = out;
    return l;
}

LayerSpec LayerSpec::conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
                            std::size_t padding) {
    LayerSpec l;
    l.kind = LayerKind::Conv2d;
    l.in = in_channels;
    l.out = out_channels;
    l.kernel = kernel;
    l.stride = stride;
    l.padding = padding;
    return l;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::flatten() {
    LayerSpec l;
    l.kind = LayerKind::Flatten;
    return l;
}

LayerSpec LayerSpec::residual_mlp(std::size_t width, std::size_t hidden) {
    LayerSpec l;
    l.kind = LayerKind::ResidualMlp;
    l.in = width;
    l.out = width;
    l.hidden = hidden;
    return l;
}

namespace {

std::string layer_label(std::size_t i, const LayerSpec& l) {
    return "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
}

Shape next_shape(std::size_t i, const LayerSpec& l, const Shape& in) {
    switch (l.kind) {
        case LayerKind::Dense:
            if (in.size() != 1 || in[0] != l.in || l.out == 0) {
                throw SpecError(layer_label(i, l) + " expects width " + std::to_string(l.in) + ", got " + shape_str(in));
            }
            return {l.out};
        case LayerKind::Conv2d: {
            if (in.size() != 3 || in[0] != l.in || l.out == 0 || l.kernel == 0 || l.stride == 0) {
                throw SpecError(layer_label(i, l) + " expects " + std::to_string(l.in) + " input channels, got " +
                                shape_str(in));
            }
            try {
                return {l.out, conv_out_size(in[1], l.kernel, l.stride, l.padding),
                        conv_out_size(in[2], l.kernel, l.stride, l.padding)};
            } catch (const ShapeError& e) {
                throw SpecError(layer_label(i, l) + ": " + e.what());
            }
        }
        case LayerKind::Relu: return in;
        case LayerKind::Flatten: return {shape_numel(in)};
        case LayerKind::ResidualMlp:
            if (in.size() != 1 || in[0] != l.in || l.out != l.in || l.hidden == 0) {
                throw SpecError(layer_label(i, l) + " must preserve width " + std::to_string(l.in) + ", got " +
                                shape_str(in));
            }
            return in;
    }
    throw SpecError("unknown layer kind");
}

}  // namespace

std::vector<Shape> NetworkSpec::activation_shapes() const {
    if (input_shape.empty() || shape_numel(input_shape) == 0) throw SpecError("input shape must be non-empty");
    std::vector<Shape> shapes{input_shape};
    for (std::size_t i = 0; i < layers.size(); ++i) shapes.push_back(next_shape(i, layers[i], shapes.back()));
    return shapes;
}

void NetworkSpec::validate() const {
    if (layers.empty()) throw SpecError("network has no layers");
    const auto shapes = activation_shapes();
    if (shapes.back().size() != 1) throw SpecError("network must end in a flat logits vector");
    if (target_layer >= layers.size()) throw SpecError("target_layer " + std::to_string(target_layer) + " out of range");
    const LayerSpec& t = layers[target_layer];
    if (!t.has_parameters()) throw SpecError("target_layer must be dense, conv2d or residual_mlp_block");
    if (t.kind != LayerKind::ResidualMlp) {
        bool consumer = false;
        for (std::size_t i = target_layer + 1; i < layers.size(); ++i) consumer = consumer || layers[i].has_parameters();
        if (!consumer) throw SpecError("target_layer must not be the final classification layer");
    }
}

std::size_t NetworkSpec::num_classes() const { return activation_shapes().back()[0]; }

std::size_t NetworkSpec::target_width() const {
    const LayerSpec& t = layers.at(target_layer);
    return t.kind == LayerKind::ResidualMlp ? t.hidden : t.out;
}

std::size_t NetworkSpec::target_activation_layer() const {
    if (layers.at(target_layer).kind != LayerKind::ResidualMlp && target_layer + 1 < layers.size() &&
        layers[target_layer + 1].kind == LayerKind::Relu) {
        return target_layer + 1;
    }
    return target_layer;
}

std::vector<ParamInfo> parameter_layout(const NetworkSpec& spec) {
    std::vector<ParamInfo> out;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        switch (l.kind) {
            case LayerKind::Dense:
                out.push_back({i, "weight", {l.out, l.in}});
                out.push_back({i, "bias", {l.out}});
                break;
            case LayerKind::Conv2d:
                out.push_back({i, "weight", {l.out, l.in, l.kernel, l.kernel}});
                out.push_back({i, "bias", {l.out}});
                break;
            case LayerKind::ResidualMlp:
                out.push_back({i, "w1", {l.hidden, l.in}});
                out.push_back({i, "b1", {l.hidden}});
                out.push_back({i, "w2", {l.in, l.hidden}});
                out.push_back({i, "b2", {l.in}});
                break;
            case LayerKind::Relu:
            case LayerKind::Flatten: break;
        }
    }
    return out;
}

std::size_t Checkpoint::param_index(std::size_t layer) const {
    const auto layout = parameter_layout(spec);
    for (std::size_t i = 0; i < layout.size(); ++i)
        if (layout[i].layer == layer) return i;
    throw SpecError("layer " + std::to_string(layer) + " has no parameters");
}

std::size_t Checkpoint::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.numel();
    return n;
}

void Checkpoint::check_shapes() const {
    const auto layout = parameter_layout(spec);
    if (layout.size() != params.size()) {
        throw SpecMismatchError("expected " + std::to_string(layout.size()) + " parameter tensors, found " +
                                std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (params[i].shape() != layout[i].shape) {
            throw SpecMismatchError("parameter " + std::to_string(i) + " (layer " + std::to_string(layout[i].layer) +
                                    " " + layout[i].name + ") has shape " + shape_str(params[i].shape()) +
                                    ", expected " + shape_str(layout[i].shape));
        }
    }
}

Checkpoint build(const NetworkSpec& spec, std::uint64_t init_seed) {
    spec.validate();
    Checkpoint model;
    model.spec = spec;
    model.meta.seed = init_seed;
    std::mt19937_64 rng(init_seed);
    for (const auto& info : parameter_layout(spec)) {
        Tensor t(info.shape);
        if (info.name[0] == 'w') {
            const std::size_t fan_in = t.numel() / info.shape[0];
            std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
            for (auto& v : t.data()) v = dist(rng);
        }
        model.params.push_back(std::move(t));
    }
    return model;
}

RecordedForward forward_on(Trace& trace, const Checkpoint& model, const Tensor& batch, const std::vector<bool>& keep,
                           bool params_require_grad) {
    std::vector<Var> params;
    for (const auto& p : model.params) params.push_back(params_require_grad ? trace.parameter(p) : trace.constant(p));
    return forward_with(trace, model.spec, std::move(params), batch, keep);
}

RecordedForward forward_with(Trace& trace, const NetworkSpec& spec, std::vector<Var> params, const Tensor& batch,
                             const std::vector<bool>& keep) {
    if (batch.rank() != spec.input_shape.size() + 1 ||
        !std::equal(spec.input_shape.begin(), spec.input_shape.end(), batch.shape().begin() + 1)) {
        throw InputError("batch shape " + shape_str(batch.shape()) + " does not match network input " +
                         shape_str(spec.input_shape));
    }
    if (!keep.empty() && keep.size() != spec.target_width()) {
        throw InputError("channel mask has " + std::to_string(keep.size()) + " entries, target width is " +
                         std::to_string(spec.target_width()));
    }
    if (params.size() != parameter_layout(spec).size()) {
        throw SpecMismatchError("forward got " + std::to_string(params.size()) + " parameter tensors, spec needs " +
                                std::to_string(parameter_layout(spec).size()));
    }

    RecordedForward rec;
    rec.params = std::move(params);

    const std::size_t n = batch.dim(0);
    const std::size_t act_layer = spec.target_activation_layer();
    Var x = trace.constant(batch);
    std::size_t p = 0;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        if (i == spec.target_layer) rec.target_input = x;
        switch (l.kind) {
            case LayerKind::Dense:
                x = linear(x, rec.params[p], rec.params[p + 1]);
                p += 2;
                break;
            case LayerKind::Conv2d:
                x = add_bias(conv2d(x, rec.params[p], l.stride, l.padding), rec.params[p + 1]);
                p += 2;
                break;
            case LayerKind::Relu: x = relu(x); break;
            case LayerKind::Flatten: x = reshape(x, {n, shape_numel(x.shape()) / n}); break;
            case LayerKind::ResidualMlp: {
                Var h = relu(linear(x, rec.params[p], rec.params[p + 1]));
                if (i == spec.target_layer) {
                    if (!keep.empty()) h = mask_channels(h, keep);
                    rec.target_activation = h;
                }
                x = add(x, linear(h, rec.params[p + 2], rec.params[p + 3]));
                p += 4;
                break;
            }
        }
        if (i == act_layer && l.kind != LayerKind::ResidualMlp) {
            if (!keep.empty()) x = mask_channels(x, keep);
            rec.target_activation = x;
        }
    }
    rec.logits = x;
    return rec;
}

Tensor forward(const Checkpoint& model, const Tensor& batch) {
    Trace trace;
    return forward_on(trace, model, batch).logits.value();
}

Tensor forward_masked(const Checkpoint& model, const Tensor& batch, const std::set<std::size_t>& zeroed_channels) {
    const std::size_t width = model.spec.target_width();
    std::vector<bool> keep(width, true);
    for (auto c : zeroed_channels) {
        if (c >= width) {
            throw InputError("channel " + std::to_string(c) + " out of range for target width " + std::to_string(width));
        }
        keep[c] = false;
    }
    if (zeroed_channels.empty()) keep.clear();
    Trace trace;
    return forward_on(trace, model, batch, keep).logits.value();
}

FlopReport count_flops(const NetworkSpec& spec) {
    const auto shapes = spec.activation_shapes();
    FlopReport report;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerSpec& l = spec.layers[i];
        std::uint64_t f = 0;
        switch (l.kind) {
            case LayerKind::Dense: f = 2ULL * l.in * l.out; break;
            case LayerKind::Conv2d: {
                const Shape& out = shapes[i + 1];
                f = 2ULL * l.out * l.in * l.kernel * l.kernel * out[1] * out[2];
                break;
            }
            case LayerKind::ResidualMlp: f = 2ULL * l.in * l.hidden + 2ULL * l.hidden * l.in; break;
            case LayerKind::Relu:
            case LayerKind::Flatten: break;
        }
        report.per_layer.push_back(f);
        report.total += f;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoint file

namespace {

constexpr char kMagic[8] = {'A', 'G', 'F', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

class ByteReader {
  public:
    explicit ByteReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) throw FormatError(std::string("truncated checkpoint: missing ") + what, pos_);
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::string text(std::size_t n, const char* what) {
        need(n, what);
        std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                      bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
        pos_ += n;
        return s;
    }

  private:
    const std::vector<unsigned char>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void save(const Checkpoint& model, const std::filesystem::path& path) {
    model.check_shapes();
    const std::string header = checkpoint_header_json(model.spec, model.meta).dump();

    std::vector<unsigned char> bytes(std::begin(kMagic), std::end(kMagic));
    put_u32(bytes, kVersion);
    put_u32(bytes, 0);
    put_u64(bytes, header.size());
    bytes.insert(bytes.end(), header.begin(), header.end());
    put_u64(bytes, model.parameter_count());
    for (const auto& t : model.params)
        for (double v : t.data()) put_u64(bytes, std::bit_cast<std::uint64_t>(v));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

Checkpoint load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    ByteReader r(bytes);
    if (r.text(sizeof kMagic, "magic") != std::string(kMagic, sizeof kMagic)) {
        throw FormatError("bad checkpoint magic", 0);
    }
    const std::size_t version_at = r.offset();
    if (r.u32("version") != kVersion) throw FormatError("unsupported checkpoint version", version_at);
    r.u32("flags");
    const std::size_t header_len = r.u64("header length");
    const std::size_t header_at = r.offset();
    const std::string header = r.text(header_len, "header");

    Checkpoint model;
    try {
        std::tie(model.spec, model.meta) = checkpoint_header_from_json(nlohmann::json::parse(header));
        model.spec.validate();
    } catch (const std::exception& e) {
        throw FormatError(std::string("invalid checkpoint header: ") + e.what(), header_at);
    }

    const std::size_t count_at = r.offset();
    const std::uint64_t count = r.u64("parameter count");
    const auto layout = parameter_layout(model.spec);
    std::uint64_t expected = 0;
    for (const auto& info : layout) expected += shape_numel(info.shape);
    if (count != expected) {
        throw FormatError("parameter count " + std::to_string(count) + " does not match spec (" +
                              std::to_string(expected) + ")",
                          count_at);
    }
    for (const auto& info : layout) {
        Tensor t(info.shape);
        for (auto& v : t.data()) v = std::bit_cast<double>(r.u64("parameter data"));
        model.params.push_back(std::move(t));
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after parameter data", r.offset());
    return model;
}

Checkpoint load_into(const std::filesystem::path& path, const NetworkSpec& expected) {
    Checkpoint model = load(path);
    if (!(model.spec == expected)) {
        throw SpecMismatchError("checkpoint " + path.string() + " was saved for a different network spec");
    }
    return model;
}

}  // namespace agf
