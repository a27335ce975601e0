#include "agf/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "agf/csv.hpp"
#include "agf/errors.hpp"

namespace agf {

Shape Dataset::sample_shape() const {
    const Shape& s = inputs.shape();
    return Shape(s.begin() + 1, s.end());
}

void Dataset::validate() const {
    if (labels.empty()) throw InputError("dataset is empty");
    if (inputs.rank() < 2 || inputs.dim(0) != labels.size()) {
        throw InputError("dataset inputs " + shape_str(inputs.shape()) + " do not match " +
                         std::to_string(labels.size()) + " labels");
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= num_classes) {
            throw InputError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                             " out of range for " + std::to_string(num_classes) + " classes");
        }
    }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
    if (indices.empty()) throw InputError("empty subset");
    const std::size_t stride = inputs.numel() / labels.size();
    Shape shape = inputs.shape();
    shape[0] = indices.size();
    std::vector<double> data;
    data.reserve(indices.size() * stride);
    Dataset out;
    out.num_classes = num_classes;
    for (auto i : indices) {
        if (i >= labels.size()) throw InputError("subset index " + std::to_string(i) + " out of range");
        const auto first = inputs.data().begin() + static_cast<std::ptrdiff_t>(i * stride);
        data.insert(data.end(), first, first + static_cast<std::ptrdiff_t>(stride));
        out.labels.push_back(labels[i]);
    }
    out.inputs = Tensor(std::move(shape), std::move(data));
    return out;
}

void SyntheticSpec::validate() const {
    if (num_classes < 1 || dim < 1 || samples_per_class < 1) {
        throw ConfigError("synthetic dataset needs at least one class, dimension and sample");
    }
    if (!(cluster_separation > 0.0)) throw ConfigError("cluster_separation must be > 0");
    if (!(noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
}

Dataset gen_gaussian_clusters(const SyntheticSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    std::vector<std::vector<double>> means(spec.num_classes, std::vector<double>(spec.dim));
    for (auto& mean : means) {
        double norm = 0.0;
        do {
            norm = 0.0;
            for (auto& v : mean) {
                v = normal(rng);
                norm += v * v;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (auto& v : mean) v = v / norm * spec.cluster_separation;
    }

    const std::size_t n = spec.num_classes * spec.samples_per_class;
    Dataset ds;
    ds.num_classes = spec.num_classes;
    std::vector<double> data;
    data.reserve(n * spec.dim);
    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
        for (std::size_t c = 0; c < spec.num_classes; ++c) {
            for (std::size_t d = 0; d < spec.dim; ++d) data.push_back(means[c][d] + spec.noise_sigma * normal(rng));
            ds.labels.push_back(c);
        }
    }
    ds.inputs = Tensor({n, spec.dim}, std::move(data));
    return ds;
}

CancellationProbe gen_cancellation_probe(std::uint64_t seed, std::size_t pairs) {
    if (pairs == 0) throw ConfigError("cancellation probe needs at least one pair");
    // Feature 0 is mirrored (a -> -a) between the halves, feature 1 is shared noise.
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> magnitude(0.5, 1.5);
    std::normal_distribution<double> noise(0.0, 1.0);

    CancellationProbe probe;
    std::vector<double> data;
    for (std::size_t i = 0; i < pairs; ++i) {
        const double a = magnitude(rng);
        const double u = noise(rng);
        data.insert(data.end(), {a, u, -a, u});
        probe.data.labels.push_back(0);
        probe.data.labels.push_back(1);
    }
    probe.data.inputs = Tensor({2 * pairs, 2}, std::move(data));
    probe.data.num_classes = 2;

    // Hidden units: h0 = relu(bias) is constant and feeds class 0 only, its
    // effect on the logit margin cancelled by the output bias. h1..h4 respond to
    // +a / -a and make the two halves exact mirror images in logit space, so
    // p0(x') = p1(x) and h0's contributions cancel pairwise.
    constexpr double kConst = 1.0;   // activation of h0
    constexpr double kVote = 1.0;    // h0 -> class 0 weight
    constexpr double kAlpha = 0.5;   // readout strength of the mirrored units
    NetworkSpec spec;
    spec.input_shape = {2};
    spec.layers = {LayerSpec::dense(2, 5), LayerSpec::relu(), LayerSpec::dense(5, 2)};
    spec.target_layer = 0;
    probe.model.spec = spec;
    probe.model.meta.seed = seed;
    probe.model.params = {
        Tensor({5, 2}, {0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.5, 0.0, -0.5, 0.0}),
        Tensor({5}, {kConst, 0.0, 0.0, 0.0, 0.0}),
        Tensor({2, 5}, {kVote, kAlpha, 0.0, kAlpha / 2, 0.0, 0.0, 0.0, kAlpha, 0.0, kAlpha / 2}),
        Tensor({2}, {-kVote * kConst, 0.0}),
    };
    probe.designated_channel = 0;
    probe.note =
        "hidden unit 0 is a constant unit (activation 1) voting for class 0, offset by the output bias; the two "
        "classes are mirror images through the hyperplane x0 = 0, so its per-sample contributions Y*dL/dY are "
        "equal and opposite across the classes";
    return probe;
}

std::vector<std::size_t> indices_with_label(const Dataset& ds, std::size_t label) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (ds.labels[i] == label) out.push_back(i);
    return out;
}

namespace {

Dataset finish_loaded(Tensor inputs, std::vector<std::size_t> labels, std::size_t num_classes) {
    Dataset ds;
    ds.inputs = std::move(inputs);
    ds.labels = std::move(labels);
    const std::size_t max_label = *std::max_element(ds.labels.begin(), ds.labels.end());
    ds.num_classes = num_classes ? num_classes : max_label + 1;
    ds.validate();
    return ds;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, std::size_t num_classes) {
    const std::string text = read_text_file(path);
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    std::vector<double> data;
    std::vector<std::size_t> labels;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_csv_line(line);
        if (fields.size() < 2) {
            throw FormatError(path.string() + ": row needs a label and at least one feature", line_no,
                              FormatError::Unit::Line);
        }
        if (width == 0) width = fields.size() - 1;
        if (fields.size() - 1 != width) {
            throw FormatError(path.string() + ": row length " + std::to_string(fields.size()) + " differs from " +
                                  std::to_string(width + 1),
                              line_no, FormatError::Unit::Line);
        }
        try {
            labels.push_back(parse_index(fields[0]));
            for (std::size_t i = 1; i < fields.size(); ++i) data.push_back(parse_real(fields[i]));
        } catch (const InputError& e) {
            throw FormatError(path.string() + ": " + e.what(), line_no, FormatError::Unit::Line);
        }
    }
    if (labels.empty()) throw FormatError(path.string() + ": no data rows", line_no, FormatError::Unit::Line);
    if (num_classes) {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] >= num_classes) {
                throw FormatError(path.string() + ": label out of range", i + 1, FormatError::Unit::Line);
            }
    }
    const std::size_t n = labels.size();
    return finish_loaded(Tensor({n, width}, std::move(data)), std::move(labels), num_classes);
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
    ds.validate();
    const std::size_t stride = ds.inputs.numel() / ds.size();
    std::string out;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out += std::to_string(ds.labels[i]);
        for (std::size_t j = 0; j < stride; ++j) out += "," + format_real(ds.inputs[i * stride + j]);
        out += '\n';
    }
    write_text_file(path, out);
}

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t at, const std::filesystem::path& path) {
    if (at + 4 > b.size()) throw FormatError(path.string() + ": truncated IDX header", b.size());
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, std::size_t num_classes) {
    const auto img = read_bytes(images);
    if (be32(img, 0, images) != 0x00000803) throw FormatError(images.string() + ": bad IDX image magic", 0);
    const std::size_t n = be32(img, 4, images);
    const std::size_t rows = be32(img, 8, images);
    const std::size_t cols = be32(img, 12, images);
    if (n == 0 || rows == 0 || cols == 0) throw FormatError(images.string() + ": zero IDX dimension", 4);
    const std::size_t pixels = n * rows * cols;
    if (img.size() != 16 + pixels) {
        throw FormatError(images.string() + ": expected " + std::to_string(pixels) + " pixel bytes",
                          std::min(img.size(), 16 + pixels));
    }

    const auto lab = read_bytes(labels);
    if (be32(lab, 0, labels) != 0x00000801) throw FormatError(labels.string() + ": bad IDX label magic", 0);
    if (be32(lab, 4, labels) != n) throw FormatError(labels.string() + ": label count differs from image count", 4);
    if (lab.size() != 8 + n) throw FormatError(labels.string() + ": expected " + std::to_string(n) + " labels", 8);

    std::vector<double> data(pixels);
    for (std::size_t i = 0; i < pixels; ++i) data[i] = static_cast<double>(img[16 + i]) / 255.0;
    std::vector<std::size_t> ls(lab.begin() + 8, lab.end());
    if (num_classes) {
        for (std::size_t i = 0; i < n; ++i)
            if (ls[i] >= num_classes) throw FormatError(labels.string() + ": label out of range", 8 + i);
    }
    return finish_loaded(Tensor({n, 1, rows, cols}, std::move(data)), std::move(ls), num_classes);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    bool shuffle) {
    if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (shuffle) order = permutation(n, seed);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

Batch make_batch(const Dataset& ds, std::vector<std::size_t> indices) {
    Dataset sub = ds.subset(indices);
    return Batch{std::move(sub.inputs), std::move(sub.labels), std::move(indices)};
}

std::vector<Batch> batches(const Dataset& ds, std::size_t batch_size, std::uint64_t seed, bool shuffle) {
    std::vector<Batch> out;
    for (auto& idx : batch_indices(ds.size(), batch_size, seed, shuffle)) out.push_back(make_batch(ds, std::move(idx)));
    return out;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& ds, double holdout_fraction, std::uint64_t seed) {
    if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) throw ConfigError("holdout_fraction must be in (0, 1)");
    std::vector<std::size_t> keep, hold;
    const auto order = permutation(ds.size(), seed);
    for (std::size_t c = 0; c < ds.num_classes; ++c) {
        std::vector<std::size_t> members;
        for (auto i : order)
            if (ds.labels[i] == c) members.push_back(i);
        const auto n_hold = static_cast<std::size_t>(std::floor(holdout_fraction * static_cast<double>(members.size())));
        hold.insert(hold.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_hold));
        keep.insert(keep.end(), members.begin() + static_cast<std::ptrdiff_t>(n_hold), members.end());
    }
    std::sort(keep.begin(), keep.end());
    std::sort(hold.begin(), hold.end());
    return {ds.subset(keep), ds.subset(hold)};
}

}  // namespace agf
