#include "agf/autodiff.hpp"

#include <cmath>
#include <optional>

#include "agf/errors.hpp"

namespace agf {

const Tensor& Var::value() const {
    if (trace == nullptr) throw ContractError("Var is not attached to a trace");
    return trace->value(*this);
}

const Tensor& GradientStore::of(Var v) const {
    auto it = grads_.find(v.id);
    if (it == grads_.end()) throw ContractError("no gradient stored for node " + std::to_string(v.id));
    return it->second;
}

Var Trace::add_node(Node node) {
    if (spent_) throw ContractError("trace already differentiated; record a new trace");
    nodes_.push_back(std::move(node));
    return Var{this, nodes_.size() - 1};
}

Var Trace::constant(Tensor value) {
    Node n;
    n.value = std::move(value);
    return add_node(std::move(n));
}

Var Trace::parameter(Tensor value) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = true;
    n.is_parameter = true;
    return add_node(std::move(n));
}

void Trace::retain_grad(Var v) { nodes_.at(v.id).retain = true; }

std::size_t Trace::recorded_ops() const {
    std::size_t count = 0;
    for (const auto& n : nodes_) count += n.rule ? 1 : 0;
    return count;
}

Var Trace::record(Tensor value, std::vector<Var> inputs, BackwardFn rule) {
    Node n;
    n.value = std::move(value);
    for (const auto& in : inputs) {
        if (in.trace != this) throw ContractError("operand recorded on a different trace");
        n.inputs.push_back(in.id);
        n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
    }
    if (n.requires_grad) n.rule = std::move(rule);
    return add_node(std::move(n));
}

GradientStore Trace::backward(Var loss) {
    if (loss.trace != this) throw ContractError("loss belongs to a different trace");
    if (spent_) throw ContractError("backward called twice on the same trace");
    if (nodes_.at(loss.id).value.numel() != 1) {
        throw ContractError("backward root must be scalar, got shape " + shape_str(nodes_[loss.id].value.shape()));
    }
    spent_ = true;

    std::vector<std::optional<Tensor>> grads(nodes_.size());
    grads[loss.id] = Tensor::full(nodes_[loss.id].value.shape(), 1.0);

    std::vector<Tensor*> slots;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (!node.rule || !grads[i]) continue;
        slots.assign(node.inputs.size(), nullptr);
        for (std::size_t j = 0; j < node.inputs.size(); ++j) {
            const std::size_t in = node.inputs[j];
            if (!nodes_[in].requires_grad) continue;
            if (!grads[in]) grads[in] = Tensor::zeros(nodes_[in].value.shape());
            slots[j] = &*grads[in];
        }
        node.rule(*grads[i], slots);
        // Intermediate gradients are dropped once consumed unless retained.
        if (!node.retain && i != loss.id) grads[i].reset();
    }

    GradientStore store;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& node = nodes_[i];
        if (!node.is_parameter && !node.retain) continue;
        store.grads_.emplace(i, grads[i] ? std::move(*grads[i]) : Tensor::zeros(node.value.shape()));
    }
    return store;
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + " shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

}  // namespace

Var matmul(Var a, Var b) {
    Tensor out = matmul(a.value(), b.value());
    return a.trace->record(std::move(out), {a, b}, [a, b](const Tensor& g, std::span<Tensor* const> dst) {
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
        if (dst[0]) {
            // dA = G B^T
            Tensor& da = *dst[0];
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) acc += g.at(i, j) * bv.at(p, j);
                    da.at(i, p) += acc;
                }
        }
        if (dst[1]) {
            // dB = A^T G
            Tensor& db = *dst[1];
            for (std::size_t p = 0; p < k; ++p)
                for (std::size_t j = 0; j < n; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < m; ++i) acc += av.at(i, p) * g.at(i, j);
                    db.at(p, j) += acc;
                }
        }
    });
}

Var linear(Var x, Var weight, Var bias) {
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    const Tensor& bv = bias.value();
    if (xv.rank() != 2 || wv.rank() != 2 || bv.rank() != 1 || xv.dim(1) != wv.dim(1) || wv.dim(0) != bv.dim(0)) {
        throw ShapeError("linear shape mismatch: x " + shape_str(xv.shape()) + ", W " + shape_str(wv.shape()) +
                         ", b " + shape_str(bv.shape()));
    }
    const std::size_t n = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
    Tensor y({n, out});
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t o = 0; o < out; ++o) {
            double acc = 0.0;
            for (std::size_t i = 0; i < in; ++i) acc += xv.at(s, i) * wv.at(o, i);
            y.at(s, o) = acc + bv[o];
        }
    return x.trace->record(std::move(y), {x, weight, bias},
                           [x, weight, n, in, out](const Tensor& g, std::span<Tensor* const> dst) {
                               const Tensor& xv = x.value();
                               const Tensor& wv = weight.value();
                               if (dst[0]) {
                                   for (std::size_t s = 0; s < n; ++s)
                                       for (std::size_t i = 0; i < in; ++i) {
                                           double acc = 0.0;
                                           for (std::size_t o = 0; o < out; ++o) acc += g.at(s, o) * wv.at(o, i);
                                           dst[0]->at(s, i) += acc;
                                       }
                               }
                               if (dst[1]) {
                                   for (std::size_t o = 0; o < out; ++o)
                                       for (std::size_t i = 0; i < in; ++i) {
                                           double acc = 0.0;
                                           for (std::size_t s = 0; s < n; ++s) acc += g.at(s, o) * xv.at(s, i);
                                           dst[1]->at(o, i) += acc;
                                       }
                               }
                               if (dst[2]) {
                                   for (std::size_t o = 0; o < out; ++o) {
                                       double acc = 0.0;
                                       for (std::size_t s = 0; s < n; ++s) acc += g.at(s, o);
                                       (*dst[2])[o] += acc;
                                   }
                               }
                           });
}

Var add_bias(Var x, Var bias) {
    const Tensor& xv = x.value();
    const Tensor& bv = bias.value();
    if (bv.rank() != 1 || xv.rank() < 2 || xv.dim(1) != bv.dim(0) || (xv.rank() != 2 && xv.rank() != 4)) {
        throw ShapeError("add_bias shape mismatch: " + shape_str(xv.shape()) + " + " + shape_str(bv.shape()));
    }
    const std::size_t n = xv.dim(0), c = xv.dim(1);
    const std::size_t spatial = xv.numel() / (n * c);
    Tensor out = xv;
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t p = 0; p < spatial; ++p) out[(s * c + ch) * spatial + p] += bv[ch];
    return x.trace->record(std::move(out), {x, bias},
                           [n, c, spatial](const Tensor& g, std::span<Tensor* const> dst) {
                               if (dst[0]) {
                                   for (std::size_t i = 0; i < g.numel(); ++i) (*dst[0])[i] += g[i];
                               }
                               if (dst[1]) {
                                   for (std::size_t ch = 0; ch < c; ++ch) {
                                       double acc = 0.0;
                                       for (std::size_t s = 0; s < n; ++s)
                                           for (std::size_t p = 0; p < spatial; ++p)
                                               acc += g[(s * c + ch) * spatial + p];
                                       (*dst[1])[ch] += acc;
                                   }
                               }
                           });
}

Var conv2d(Var input, Var kernel, std::size_t stride, std::size_t padding) {
    Tensor out = conv2d(input.value(), kernel.value(), stride, padding);
    return input.trace->record(
        std::move(out), {input, kernel},
        [input, kernel, stride, padding](const Tensor& g, std::span<Tensor* const> dst) {
            const Tensor& x = input.value();
            const Tensor& k = kernel.value();
            const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
            const std::size_t o = k.dim(0), kh = k.dim(2), kw = k.dim(3);
            const std::size_t ho = g.dim(2), wo = g.dim(3);
            const auto ip = static_cast<std::ptrdiff_t>(padding);
            for (std::size_t s = 0; s < n; ++s)
                for (std::size_t oc = 0; oc < o; ++oc)
                    for (std::size_t oy = 0; oy < ho; ++oy)
                        for (std::size_t ox = 0; ox < wo; ++ox) {
                            const double go = g[((s * o + oc) * ho + oy) * wo + ox];
                            for (std::size_t ic = 0; ic < c; ++ic)
                                for (std::size_t ky = 0; ky < kh; ++ky) {
                                    const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - ip;
                                    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                                    for (std::size_t kx = 0; kx < kw; ++kx) {
                                        const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - ip;
                                        if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
                                        const std::size_t xi = ((s * c + ic) * h + static_cast<std::size_t>(iy)) * w +
                                                               static_cast<std::size_t>(ix);
                                        const std::size_t ki = ((oc * c + ic) * kh + ky) * kw + kx;
                                        if (dst[0]) (*dst[0])[xi] += go * k[ki];
                                        if (dst[1]) (*dst[1])[ki] += go * x[xi];
                                    }
                                }
                        }
        });
}

Var relu(Var x) {
    Tensor out = relu(x.value());
    return x.trace->record(std::move(out), {x}, [x](const Tensor& g, std::span<Tensor* const> dst) {
        const Tensor& xv = x.value();
        for (std::size_t i = 0; i < g.numel(); ++i)
            if (xv[i] > 0.0) (*dst[0])[i] += g[i];
    });
}

Var reshape(Var x, Shape shape) {
    Tensor out = x.value().reshaped(std::move(shape));
    return x.trace->record(std::move(out), {x}, [](const Tensor& g, std::span<Tensor* const> dst) {
        for (std::size_t i = 0; i < g.numel(); ++i) (*dst[0])[i] += g[i];
    });
}

Var add(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
    return a.trace->record(std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> dst) {
        for (auto* d : dst)
            if (d)
                for (std::size_t i = 0; i < g.numel(); ++i) (*d)[i] += g[i];
    });
}

Var sub(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
    return a.trace->record(std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> dst) {
        if (dst[0])
            for (std::size_t i = 0; i < g.numel(); ++i) (*dst[0])[i] += g[i];
        if (dst[1])
            for (std::size_t i = 0; i < g.numel(); ++i) (*dst[1])[i] -= g[i];
    });
}

Var mul(Var a, Var b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
    return a.trace->record(std::move(out), {a, b}, [a, b](const Tensor& g, std::span<Tensor* const> dst) {
        if (dst[0])
            for (std::size_t i = 0; i < g.numel(); ++i) (*dst[0])[i] += g[i] * b.value()[i];
        if (dst[1])
            for (std::size_t i = 0; i < g.numel(); ++i) (*dst[1])[i] += g[i] * a.value()[i];
    });
}

Var scale(Var x, double alpha) {
    Tensor out = x.value();
    for (auto& v : out.data()) v *= alpha;
    return x.trace->record(std::move(out), {x}, [alpha](const Tensor& g, std::span<Tensor* const> dst) {
        for (std::size_t i = 0; i < g.numel(); ++i) (*dst[0])[i] += alpha * g[i];
    });
}

Var sum(Var x) {
    double total = 0.0;
    for (double v : x.value().data()) total += v;
    return x.trace->record(Tensor::scalar(total), {x}, [](const Tensor& g, std::span<Tensor* const> dst) {
        const double gs = g.item();
        for (auto& v : dst[0]->data()) v += gs;
    });
}

Var mask_channels(Var x, const std::vector<bool>& keep) {
    const Tensor& xv = x.value();
    if (xv.rank() < 2 || keep.size() != xv.dim(1)) {
        throw ShapeError("mask of " + std::to_string(keep.size()) + " channels for tensor " + shape_str(xv.shape()));
    }
    const std::size_t n = xv.dim(0), c = xv.dim(1);
    const std::size_t spatial = xv.numel() / (n * c);
    Tensor out = xv;
    for (std::size_t s = 0; s < n; ++s)
        for (std::size_t ch = 0; ch < c; ++ch)
            if (!keep[ch])
                for (std::size_t p = 0; p < spatial; ++p) out[(s * c + ch) * spatial + p] = 0.0;
    return x.trace->record(std::move(out), {x},
                           [keep, n, c, spatial](const Tensor& g, std::span<Tensor* const> dst) {
                               for (std::size_t s = 0; s < n; ++s)
                                   for (std::size_t ch = 0; ch < c; ++ch)
                                       if (keep[ch])
                                           for (std::size_t p = 0; p < spatial; ++p) {
                                               const std::size_t i = (s * c + ch) * spatial + p;
                                               (*dst[0])[i] += g[i];
                                           }
                           });
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels, Reduction reduction) {
    const Tensor& z = logits.value();
    const double total = cross_entropy_sum(z, labels);  // validates labels and shape
    const double n = static_cast<double>(labels.size());
    const double loss = reduction == Reduction::Mean ? total / n : total;
    std::vector<std::size_t> owned(labels.begin(), labels.end());
    return logits.trace->record(
        Tensor::scalar(loss), {logits},
        [logits, owned = std::move(owned), reduction, n](const Tensor& g, std::span<Tensor* const> dst) {
            const Tensor p = softmax(logits.value());
            const double factor = reduction == Reduction::Mean ? g.item() / n : g.item();
            Tensor& d = *dst[0];
            const std::size_t c = p.dim(1);
            for (std::size_t i = 0; i < owned.size(); ++i)
                for (std::size_t j = 0; j < c; ++j) {
                    const double target = j == owned[i] ? 1.0 : 0.0;
                    d.at(i, j) += factor * (p.at(i, j) - target);
                }
        });
}

}  // namespace agf
