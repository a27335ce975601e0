#include "agf/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <functional>
#include <numeric>

#include "agf/errors.hpp"

namespace agf {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_str(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {
    for (auto d : shape_) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
    }
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    for (auto d : shape_) {
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
    }
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("shape " + shape_str(shape_) + " does not match " + std::to_string(data_.size()) +
                         " values");
    }
}

Tensor Tensor::full(Shape shape, double value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("ragged matrix literal");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
    }
    return shape_[axis];
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool operator==(const Tensor& a, const Tensor& b) {
    if (a.shape_ != b.shape_) return false;
    // memcmp semantics: -0 != +0 and NaN payloads compare by bits.
    return std::equal(a.data_.begin(), a.data_.end(), b.data_.begin(), [](double x, double y) {
        return std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(y);
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul shape mismatch: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out({m, n});
    auto o = out.data();
    auto av = a.data();
    auto bv = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = av[i * k + p];
            const double* brow = &bv[p * n];
            double* orow = &o[i * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
        }
    }
    return out;
}

std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
    if (stride == 0) throw ShapeError("conv stride must be positive");
    if (kernel > in + 2 * padding) {
        throw ShapeError("kernel " + std::to_string(kernel) + " larger than padded input " +
                         std::to_string(in + 2 * padding));
    }
    return (in + 2 * padding - kernel) / stride + 1;
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding) {
    if (input.rank() != 4 || kernel.rank() != 4 || input.dim(1) != kernel.dim(1)) {
        throw ShapeError("conv2d shape mismatch: input " + shape_str(input.shape()) + ", kernel " +
                         shape_str(kernel.shape()));
    }
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t o = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    const std::size_t ho = conv_out_size(h, kh, stride, padding);
    const std::size_t wo = conv_out_size(w, kw, stride, padding);
    Tensor out({n, o, ho, wo});
    auto x = input.data();
    auto k = kernel.data();
    auto y = out.data();
    const auto ip = static_cast<std::ptrdiff_t>(padding);
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t oc = 0; oc < o; ++oc) {
            for (std::size_t oy = 0; oy < ho; ++oy) {
                for (std::size_t ox = 0; ox < wo; ++ox) {
                    double acc = 0.0;
                    for (std::size_t ic = 0; ic < c; ++ic) {
                        for (std::size_t ky = 0; ky < kh; ++ky) {
                            const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - ip;
                            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                            for (std::size_t kx = 0; kx < kw; ++kx) {
                                const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - ip;
                                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                acc += x[((s * c + ic) * h + static_cast<std::size_t>(iy)) * w +
                                         static_cast<std::size_t>(ix)] *
                                       k[((oc * c + ic) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    y[((s * o + oc) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    return out;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
    return out;
}

namespace {

void require_logits(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("expected N x C logits, got " + shape_str(logits.shape()));
}

}  // namespace

Tensor log_softmax(const Tensor& logits) {
    require_logits(logits);
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    Tensor out({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        double mx = logits.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) sum += std::exp(logits.at(i, j) - mx);
        const double lse = std::log(sum);
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) = logits.at(i, j) - mx - lse;
    }
    return out;
}

Tensor softmax(const Tensor& logits) {
    require_logits(logits);
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    Tensor out({n, c});
    for (std::size_t i = 0; i < n; ++i) {
        double mx = logits.at(i, 0);
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, logits.at(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out.at(i, j) = std::exp(logits.at(i, j) - mx);
            sum += out.at(i, j);
        }
        for (std::size_t j = 0; j < c; ++j) out.at(i, j) /= sum;
    }
    return out;
}

double cross_entropy_sum(const Tensor& logits, std::span<const std::size_t> labels) {
    require_logits(logits);
    if (labels.size() != logits.dim(0)) throw InputError("label count does not match batch size");
    const Tensor lp = log_softmax(logits);
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= logits.dim(1)) {
            throw InputError("label " + std::to_string(labels[i]) + " out of range for " +
                             std::to_string(logits.dim(1)) + " classes");
        }
        total -= lp.at(i, labels[i]);
    }
    return total;
}

double cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
    return cross_entropy_sum(logits, labels) / static_cast<double>(labels.size());
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("max_abs_diff shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

}  // namespace agf
