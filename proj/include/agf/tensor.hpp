#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace agf {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array of 64-bit reals. Value type: copies are deep.
class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(Shape shape);  // zero-filled
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value) { return Tensor({}, {value}); }
    // 2-D convenience for tests and hand-built models.
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor vector(std::initializer_list<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const noexcept { return data_.size(); }
    bool is_scalar() const noexcept { return data_.size() == 1 && shape_.empty(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    double item() const;

    Tensor reshaped(Shape shape) const;
    bool all_finite() const noexcept;

    // Bitwise comparison, including shape.
    friend bool operator==(const Tensor& a, const Tensor& b);

  private:
    Shape shape_;
    std::vector<double> data_;
};

// Plain (unrecorded) kernels. The recorded variants in autodiff.hpp reuse them.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, std::size_t padding);
std::size_t conv_out_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding);
Tensor relu(const Tensor& x);
// Row-wise softmax over the last axis of an N x C tensor.
Tensor softmax(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);
// Sum over the batch of -log softmax(logits)[label].
double cross_entropy_sum(const Tensor& logits, std::span<const std::size_t> labels);
// Batch mean of the above.
double cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace agf
