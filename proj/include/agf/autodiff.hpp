#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "agf/tensor.hpp"

namespace agf {

class Trace;

// Handle to a value recorded on a Trace.
struct Var {
    Trace* trace = nullptr;
    std::size_t id = 0;

    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
};

// Gradients keyed by trace node. Every entry has the shape of its value.
class GradientStore {
  public:
    bool has(Var v) const { return grads_.contains(v.id); }
    const Tensor& of(Var v) const;
    std::size_t size() const { return grads_.size(); }

  private:
    friend class Trace;
    std::map<std::size_t, Tensor> grads_;
};

// Records operations in execution order. backward() walks the recording in
// exact reverse, so identical recordings give bitwise-identical gradients.
// A trace can be differentiated once; record a fresh trace for another pass.
class Trace {
  public:
    Trace() = default;
    Trace(const Trace&) = delete;
    Trace& operator=(const Trace&) = delete;

    Var constant(Tensor value);
    Var parameter(Tensor value);

    // Keep the gradient of an intermediate value in the GradientStore.
    void retain_grad(Var v);

    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    std::size_t size() const { return nodes_.size(); }
    // Number of nodes carrying a backward rule.
    std::size_t recorded_ops() const;

    // Returns gradients for every parameter (zeros when unreachable) and every
    // retained intermediate.
    GradientStore backward(Var loss);

    // Accumulates (+=) each input's gradient into in_grads[j]; a null entry
    // means that input does not require grad.
    using BackwardFn = std::function<void(const Tensor& out_grad, std::span<Tensor* const> in_grads)>;

    // Adds a node. When no input requires grad the node is a plain value and
    // `rule` is dropped.
    Var record(Tensor value, std::vector<Var> inputs, BackwardFn rule);

  private:
    struct Node {
        Tensor value;
        bool requires_grad = false;
        bool is_parameter = false;
        bool retain = false;
        std::vector<std::size_t> inputs;
        BackwardFn rule;
    };

    Var add_node(Node node);

    std::vector<Node> nodes_;
    bool spent_ = false;
};

enum class Reduction { Mean, Sum };

// Recorded operations.
Var matmul(Var a, Var b);
// y = x W^T + b with x: N x in, W: out x in, b: out.
Var linear(Var x, Var weight, Var bias);
// x: N x M with bias M, or N x C x H x W with bias C.
Var add_bias(Var x, Var bias);
Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding);
Var relu(Var x);
Var reshape(Var x, Shape shape);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double alpha);
Var sum(Var x);
// Forces channel c (axis 1) to exactly zero where keep[c] is false.
Var mask_channels(Var x, const std::vector<bool>& keep);
Var cross_entropy(Var logits, std::span<const std::size_t> labels, Reduction reduction = Reduction::Mean);

}  // namespace agf
