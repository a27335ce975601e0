#pragma once

#include <functional>
#include <span>
#include <vector>

#include "agf/autodiff.hpp"
#include "agf/network.hpp"

namespace agf {

// Builds a scalar loss on `trace` from the recorded parameters.
using LossBuilder = std::function<Var(Trace& trace, const std::vector<Var>& params)>;

// Worst relative error between backward gradients and central differences
// over every parameter element, with denominator max(|analytic|, |numeric|, 1e-8).
// No parameters gives 0. Throws ContractError unless step > 0.
double grad_check(const LossBuilder& loss, const std::vector<Tensor>& params, double step = 1e-5);

// Same for a network under batch-mean cross-entropy.
double grad_check(const Checkpoint& model, const Tensor& input, std::span<const std::size_t> labels,
                  double step = 1e-5);

}  // namespace agf
