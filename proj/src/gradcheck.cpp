#include "agf/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "agf/errors.hpp"

namespace agf {

namespace {

double evaluate_loss(const LossBuilder& loss, const std::vector<Tensor>& params) {
    Trace trace;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(trace.constant(p));
    return loss(trace, vars).value().item();
}

}  // namespace

double grad_check(const LossBuilder& loss, const std::vector<Tensor>& params, double step) {
    if (!(step > 0.0)) throw ContractError("finite-difference step must be > 0");
    if (params.empty()) return 0.0;

    Trace trace;
    std::vector<Var> vars;
    for (const auto& p : params) vars.push_back(trace.parameter(p));
    const GradientStore grads = trace.backward(loss(trace, vars));

    double worst = 0.0;
    std::vector<Tensor> probe = params;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Tensor& analytic = grads.of(vars[i]);
        for (std::size_t j = 0; j < params[i].numel(); ++j) {
            const double original = params[i][j];
            probe[i].data()[j] = original + step;
            const double up = evaluate_loss(loss, probe);
            probe[i].data()[j] = original - step;
            const double down = evaluate_loss(loss, probe);
            probe[i].data()[j] = original;
            const double numeric = (up - down) / (2.0 * step);
            const double denom = std::max({std::abs(analytic[j]), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(analytic[j] - numeric) / denom);
        }
    }
    return worst;
}

double grad_check(const Checkpoint& model, const Tensor& input, std::span<const std::size_t> labels, double step) {
    model.check_shapes();
    const std::vector<std::size_t> y(labels.begin(), labels.end());
    const LossBuilder loss = [&](Trace& trace, const std::vector<Var>& params) {
        return cross_entropy(forward_with(trace, model.spec, params, input).logits, y, Reduction::Mean);
    };
    return grad_check(loss, model.params, step);
}

}  // namespace agf
