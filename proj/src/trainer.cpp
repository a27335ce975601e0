#include "agf/trainer.hpp"

#include <cmath>
#include <numbers>

#include "agf/csv.hpp"
#include "agf/errors.hpp"

namespace agf {

std::string to_string(Schedule schedule) { return schedule == Schedule::Cosine ? "cosine" : "constant"; }

Schedule schedule_from_string(const std::string& name) {
    if (name == "cosine") return Schedule::Cosine;
    if (name == "constant") return Schedule::Constant;
    throw ConfigError("unknown schedule '" + name + "'; valid schedules: cosine, constant");
}

void TrainConfig::validate() const {
    if (!(lr0 >= 0.0) || !std::isfinite(lr0)) throw ConfigError("lr0 must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

double TrainConfig::lr_at(std::size_t epoch) const {
    if (schedule == Schedule::Constant || epochs == 0) return lr0;
    const double frac = static_cast<double>(epoch) / static_cast<double>(epochs);
    return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

TrainConfig default_finetune_config() {
    TrainConfig c;
    c.epochs = 10;
    c.schedule = Schedule::Constant;
    return c;
}

std::string TrainHistory::csv() const {
    CsvWriter w({"epoch", "lr", "train_loss", "train_acc", "eval_acc"});
    for (const auto& e : epochs) {
        w.row({std::to_string(e.epoch), format_real(e.lr), format_real(e.train_loss), format_real(e.train_acc),
               format_real(e.eval_acc)});
    }
    return w.str();
}

std::uint64_t TrainHistory::digest() const {
    const std::string text = csv();
    return fnv1a64({reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
    write_text_file(path, history.csv());
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
    if (logits.rank() != 2 || logits.dim(1) == 0) throw ShapeError("argmax expects N x C logits");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    std::vector<std::size_t> out(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < c; ++j)
            if (logits.at(i, j) > logits.at(i, best)) best = j;
        out[i] = best;
    }
    return out;
}

Tensor forward_chunked(const Checkpoint& model, const Tensor& inputs, std::size_t chunk) {
    const std::size_t n = inputs.dim(0);
    if (n <= chunk) return forward(model, inputs);
    const std::size_t per = inputs.numel() / n;
    const std::size_t classes = model.spec.num_classes();
    Tensor out({n, classes});
    for (std::size_t start = 0; start < n; start += chunk) {
        const std::size_t m = std::min(chunk, n - start);
        Shape shape = inputs.shape();
        shape[0] = m;
        Tensor part(shape);
        std::copy_n(inputs.data().begin() + static_cast<std::ptrdiff_t>(start * per), m * per, part.data().begin());
        const Tensor logits = forward(model, part);
        std::copy_n(logits.data().begin(), m * classes, out.data().begin() + static_cast<std::ptrdiff_t>(start * classes));
    }
    return out;
}

std::vector<std::size_t> predict(const Checkpoint& model, const Tensor& inputs) {
    return argmax_rows(forward_chunked(model, inputs));
}

double evaluate(const Checkpoint& model, const Dataset& data) {
    if (data.size() == 0) throw InputError("cannot evaluate on an empty dataset");
    data.validate();
    const auto pred = predict(model, data.inputs);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train(const Checkpoint& model, const Dataset& data, const TrainConfig& config, const Dataset* eval) {
    config.validate();
    data.validate();
    model.check_shapes();
    TrainResult result{model, {}};
    Checkpoint& m = result.model;
    std::vector<Tensor> velocity;
    for (const auto& p : m.params) velocity.push_back(Tensor::zeros(p.shape()));

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.lr_at(epoch);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (const auto& b : batches(data, config.batch_size, derive_seed(config.seed, epoch), true)) {
            Trace trace;
            const auto rec = forward_on(trace, m, b.inputs, {}, /*params_require_grad=*/true);
            const Var loss = cross_entropy(rec.logits, b.labels, Reduction::Mean);
            const double value = loss.value().item();
            if (!std::isfinite(value)) throw TrainingError("training loss diverged to " + format_real(value), epoch);
            loss_sum += value * static_cast<double>(b.labels.size());
            const auto pred = argmax_rows(rec.logits.value());
            for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == b.labels[i];

            const GradientStore grads = trace.backward(loss);
            for (std::size_t i = 0; i < m.params.size(); ++i) {
                const Tensor& g = grads.of(rec.params[i]);
                auto w = m.params[i].data();
                auto v = velocity[i].data();
                for (std::size_t j = 0; j < w.size(); ++j) {
                    const double d = g[j] + config.weight_decay * w[j];
                    v[j] = config.momentum * v[j] + d;
                    const double step = config.nesterov ? d + config.momentum * v[j] : v[j];
                    w[j] -= lr * step;
                }
            }
        }
        for (const auto& p : m.params)
            if (!p.all_finite()) throw TrainingError("parameters became non-finite", epoch);
        const double n = static_cast<double>(data.size());
        result.history.epochs.push_back(
            {epoch, lr, loss_sum / n, static_cast<double>(correct) / n, evaluate(m, eval ? *eval : data)});
    }
    if (config.epochs > 0) {
        m.meta.epoch += config.epochs;
        m.meta.seed = config.seed;
        m.meta.history_digest = result.history.digest();
    }
    return result;
}

TrainResult finetune(const Checkpoint& pruned, const Dataset& data, const TrainConfig& config, const Dataset* eval) {
    return train(pruned, data, config, eval);
}

std::vector<std::size_t> sparsity_ramp(std::size_t width, std::size_t k, std::size_t steps) {
    if (k < 1 || k > width) throw InputError("k=" + std::to_string(k) + " out of range [1, " + std::to_string(width) + "]");
    if (steps < 1) throw ConfigError("ramp steps must be >= 1");
    std::vector<std::size_t> widths;
    for (std::size_t s = 1; s <= steps; ++s) {
        const double frac = static_cast<double>(s) / static_cast<double>(steps);
        const double w = static_cast<double>(width) - frac * static_cast<double>(width - k);
        widths.push_back(s == steps ? k : static_cast<std::size_t>(std::llround(w)));
    }
    return widths;
}

IterativePruneResult iterative_prune(const Checkpoint& model, const Dataset& calib, const Dataset& train_data,
                                     Metric metric, const CalibrationConfig& calibration, std::size_t k,
                                     std::size_t steps, const TrainConfig& finetune_config, const Dataset* eval) {
    IterativePruneResult result{model, {}, {}};
    std::vector<std::size_t> original(model.spec.target_width());
    for (std::size_t c = 0; c < original.size(); ++c) original[c] = c;

    for (std::size_t width : sparsity_ramp(model.spec.target_width(), k, steps)) {
        CalibrationConfig step_cal = calibration;
        step_cal.seed = derive_seed(calibration.seed, result.histories.size());
        if (steps == 1) step_cal.seed = calibration.seed;
        const auto table = score_metric(metric, result.model, calib, step_cal);
        PruneSpec ps{result.model.spec.target_layer, select_topk(table, width), {to_string(metric), k, calibration.seed}};
        result.model = prune_structural(result.model, ps);
        std::vector<std::size_t> mapped;
        for (auto c : ps.keep) mapped.push_back(original[c]);
        original = std::move(mapped);
        auto tuned = finetune(result.model, train_data, finetune_config, eval);
        result.model = std::move(tuned.model);
        result.histories.push_back(std::move(tuned.history));
    }
    result.spec = {model.spec.target_layer, original, {to_string(metric), k, calibration.seed}};
    return result;
}

}  // namespace agf
