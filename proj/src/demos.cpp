#include "agf/demos.hpp"

#include <algorithm>
#include <cmath>

#include "agf/csv.hpp"
#include "agf/errors.hpp"
#include "agf/surgeon.hpp"

namespace agf {

double median(std::vector<double> values) {
    if (values.empty()) throw InputError("median of an empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

CancellationDemo run_cancellation_demo(std::uint64_t seed) {
    const CancellationProbe probe = gen_cancellation_probe(seed);
    // One full-batch pass: the probe's halves cancel over the whole set.
    CalibrationConfig config;
    config.T = 1;
    config.batch_size = probe.data.size();
    config.seed = seed;
    const FeatureScores scores = calibrate_feature_scores(probe.model, probe.data, config);

    CancellationDemo demo;
    demo.designated = probe.designated_channel;
    demo.agf = scores.agf.scores;
    demo.taylor = scores.taylor_feature.scores;
    demo.agf_median = median(demo.agf);
    demo.taylor_median = median(demo.taylor);
    const double a = demo.agf[demo.designated], t = demo.taylor[demo.designated];
    demo.taylor_near_zero = t < 1e-6;
    demo.agf_large = a > 0.1;
    demo.agf_above_median = a > demo.agf_median;
    demo.taylor_below_median = t < demo.taylor_median;
    return demo;
}

void write_cancellation_csv(const CancellationDemo& demo, const std::filesystem::path& path) {
    CsvWriter w({"channel", "agf", "taylor_feature"});
    for (std::size_t c = 0; c < demo.agf.size(); ++c)
        w.row({std::to_string(c), format_real(demo.agf[c]), format_real(demo.taylor[c])});
    w.write(path);
}

NetworkSpec DemoTask::network() const {
    return NetworkSpec{{data.dim},
                       {LayerSpec::dense(data.dim, hidden), LayerSpec::relu(), LayerSpec::dense(hidden, data.num_classes)},
                       0};
}

TaskRun prepare_task(const DemoTask& task) {
    auto [train_set, test_set] = split_holdout(gen_gaussian_clusters(task.data), task.holdout_fraction, task.split_seed);
    Checkpoint teacher = train(build(task.network(), task.init_seed), train_set, task.teacher).model;
    return {std::move(train_set), std::move(test_set), std::move(teacher)};
}

namespace {

TrainConfig demo_teacher_config() {
    TrainConfig c;
    c.epochs = 40;
    c.lr0 = 5e-2;
    c.seed = 1;
    return c;
}

void summarize(VariantResult& v) {
    const double n = static_cast<double>(v.accuracy.size());
    double sum = 0.0;
    for (double a : v.accuracy) sum += a;
    v.mean = sum / n;
    double sq = 0.0;
    for (double a : v.accuracy) sq += (a - v.mean) * (a - v.mean);
    v.stddev = v.accuracy.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
}

}  // namespace

PhaseTransitionConfig PhaseTransitionConfig::defaults() {
    PhaseTransitionConfig c;
    c.task.data = SyntheticSpec{10, 64, 100, 5.0, 1.0, 1};
    c.task.holdout_fraction = 0.7;
    c.task.teacher = demo_teacher_config();
    c.finetune = default_finetune_config();
    c.calibration.T = 8;
    c.calibration.batch_size = 32;
    return c;
}

const VariantResult& PhaseTransitionDemo::variant(const std::string& name) const {
    for (const auto& v : variants)
        if (v.name == name) return v;
    throw InputError("no variant '" + name + "'");
}

PhaseTransitionDemo run_phase_transition_demo(const PhaseTransitionConfig& config) {
    if (config.seeds.size() < 2) throw ConfigError("phase-transition demo needs at least 2 seeds");
    const TaskRun run = prepare_task(config.task);
    PhaseTransitionDemo demo;
    demo.teacher_accuracy = evaluate(run.teacher, run.test);

    const std::vector<std::pair<std::string, Metric>> inherited{
        {"random", Metric::Random}, {"l1", Metric::L1}, {"agf", Metric::Agf}};
    for (const auto& [name, metric] : inherited) demo.variants.push_back({name, {}, 0.0, 0.0});
    demo.variants.push_back({"scratch", {}, 0.0, 0.0});

    for (std::uint64_t seed : config.seeds) {
        CalibrationConfig cal = config.calibration;
        cal.seed = seed;
        TrainConfig ft = config.finetune;
        ft.seed = seed;
        Checkpoint last;
        for (std::size_t v = 0; v < inherited.size(); ++v) {
            const auto table = score_metric(inherited[v].second, run.teacher, run.train, cal);
            const PruneSpec ps{run.teacher.spec.target_layer, select_topk(table, config.k),
                               {inherited[v].first, config.k, seed}};
            last = prune_structural(run.teacher, ps);
            demo.variants[v].accuracy.push_back(evaluate(finetune(last, run.train, ft).model, run.test));
        }
        const Checkpoint scratch = scratch_variant(last.spec, derive_seed(seed, 99));
        demo.variants.back().accuracy.push_back(evaluate(finetune(scratch, run.train, ft).model, run.test));
    }
    for (auto& v : demo.variants) summarize(v);

    const double scratch_mean = demo.variant("scratch").mean;
    demo.margin_ok = true;
    for (std::size_t v = 0; v < inherited.size(); ++v)
        demo.margin_ok = demo.margin_ok && demo.variants[v].mean >= scratch_mean + config.margin;
    demo.agf_std_ok = demo.variant("agf").stddev <= demo.variant("random").stddev;
    return demo;
}

void write_phase_transition_csv(const PhaseTransitionDemo& demo, const std::filesystem::path& path) {
    CsvWriter w({"variant", "seed_index", "accuracy", "mean", "stddev"});
    for (const auto& v : demo.variants)
        for (std::size_t s = 0; s < v.accuracy.size(); ++s)
            w.row({v.name, std::to_string(s), format_real(v.accuracy[s]), format_real(v.mean), format_real(v.stddev)});
    w.write(path);
}

ProxyFidelityConfig ProxyFidelityConfig::defaults() {
    ProxyFidelityConfig c;
    c.task.data = SyntheticSpec{10, 64, 500, 5.0, 1.0, 1};
    c.task.holdout_fraction = 0.3;
    c.task.teacher = demo_teacher_config();
    c.finetune = default_finetune_config();
    c.calibration.T = 8;
    c.calibration.batch_size = 64;
    return c;
}

ProxyFidelityReport reference_fidelity() { return fidelity_from_sums(232682.0, 1557.0, 4.89e-4, 2.29e-5); }

ProxyFidelityDemo run_proxy_fidelity_demo(const ProxyFidelityConfig& config) {
    ProxyFidelityDemo demo;
    demo.reference = reference_fidelity();
    demo.compressed_every_seed = !config.seeds.empty();
    for (std::uint64_t seed : config.seeds) {
        // Each seed is an independently initialized and trained teacher.
        DemoTask task = config.task;
        task.init_seed = derive_seed(config.task.init_seed, seed);
        task.teacher.seed = derive_seed(config.task.teacher.seed, seed);
        const TaskRun run = prepare_task(task);
        CalibrationConfig cal = config.calibration;
        cal.seed = seed;
        const PruneSpec ps{run.teacher.spec.target_layer, select_topk(calibrate_agf(run.teacher, run.train, cal), config.k),
                           {"agf", config.k, seed}};
        TrainConfig ft = config.finetune;
        ft.seed = seed;
        const Checkpoint pruned = finetune(prune_structural(run.teacher, ps), run.train, ft).model;
        const ProxyFidelityReport r = proxy_fidelity(run.teacher, pruned, run.train, cal);
        demo.seeds.push_back(seed);
        demo.measured.push_back(r);
        demo.compressed_every_seed =
            demo.compressed_every_seed && r.agf_ratio && r.l1_ratio && *r.agf_ratio < *r.l1_ratio;
    }
    return demo;
}

void write_proxy_fidelity_demo_csv(const ProxyFidelityDemo& demo, const std::filesystem::path& path) {
    auto ratio = [](const std::optional<double>& r) { return r ? format_real(*r) : std::string("undefined"); };
    CsvWriter w({"source", "l1_full", "l1_pruned", "l1_ratio", "agf_full", "agf_pruned", "agf_ratio"});
    auto add = [&](const std::string& source, const ProxyFidelityReport& r) {
        w.row({source, format_real(r.l1_full), format_real(r.l1_pruned), ratio(r.l1_ratio), format_real(r.agf_full),
               format_real(r.agf_pruned), ratio(r.agf_ratio)});
    };
    add("reference", demo.reference);
    for (std::size_t i = 0; i < demo.measured.size(); ++i) add("seed" + std::to_string(demo.seeds[i]), demo.measured[i]);
    w.write(path);
}

}  // namespace agf
