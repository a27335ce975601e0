#include "agf/pipeline.hpp"

#include <cstdlib>
#include <ostream>

#include "agf/csv.hpp"
#include "agf/errors.hpp"
#include "agf/surgeon.hpp"

namespace agf {

namespace {

std::string require_string(const json& j, const std::string& key, const std::string& ctx) {
    const json& v = require_field(j, key, ctx);
    if (!v.is_string()) throw ConfigError("field '" + ctx + "." + key + "' must be a string");
    return v.get<std::string>();
}

bool optional_bool(const json& j, const std::string& key, const std::string& ctx, bool fallback) {
    if (!j.contains(key)) return fallback;
    if (!j.at(key).is_boolean()) throw ConfigError("field '" + ctx + "." + key + "' must be a boolean");
    return j.at(key).get<bool>();
}

double optional_real(const json& j, const std::string& key, const std::string& ctx, double fallback) {
    return j.contains(key) ? require_real(j, key, ctx) : fallback;
}

std::size_t optional_size(const json& j, const std::string& key, const std::string& ctx, std::size_t fallback) {
    return j.contains(key) ? require_size(j, key, ctx) : fallback;
}

const json& require_object(const json& j, const std::string& key, const std::string& ctx) {
    const json& v = require_field(j, key, ctx);
    if (!v.is_object()) throw ConfigError("field '" + ctx + "." + key + "' must be an object");
    return v;
}

Metric metric_field(const json& j, const std::string& key, const std::string& ctx) {
    try {
        return metric_from_string(require_string(j, key, ctx));
    } catch (const InputError& e) {
        throw ConfigError("field '" + ctx + "." + key + "': " + e.what());
    }
}

TrainConfig train_from_json(const json& j, const std::string& ctx, const TrainConfig& defaults) {
    TrainConfig c = defaults;
    c.epochs = require_size(j, "epochs", ctx);
    c.batch_size = require_size(j, "batch_size", ctx);
    c.lr0 = require_real(j, "lr0", ctx);
    c.seed = require_size(j, "seed", ctx);
    c.momentum = optional_real(j, "momentum", ctx, c.momentum);
    c.nesterov = optional_bool(j, "nesterov", ctx, c.nesterov);
    c.weight_decay = optional_real(j, "weight_decay", ctx, c.weight_decay);
    if (j.contains("schedule")) c.schedule = schedule_from_string(require_string(j, "schedule", ctx));
    try {
        c.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(ctx + ": " + e.what());
    }
    return c;
}

json to_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},   {"batch_size", c.batch_size},     {"lr0", c.lr0},
                {"momentum", c.momentum}, {"nesterov", c.nesterov},       {"weight_decay", c.weight_decay},
                {"schedule", to_string(c.schedule)}, {"seed", c.seed}};
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

DatasetConfig dataset_from_json(const json& j, const std::filesystem::path& base) {
    const std::string ctx = "dataset";
    DatasetConfig c;
    const std::string kind = require_string(j, "kind", ctx);
    if (kind == "gaussian_clusters") {
        c.kind = DatasetKind::GaussianClusters;
        c.synthetic.num_classes = require_size(j, "num_classes", ctx);
        c.synthetic.dim = require_size(j, "dim", ctx);
        c.synthetic.samples_per_class = require_size(j, "samples_per_class", ctx);
        c.synthetic.cluster_separation = require_real(j, "cluster_separation", ctx);
        c.synthetic.noise_sigma = require_real(j, "noise_sigma", ctx);
        c.synthetic.seed = require_size(j, "seed", ctx);
        c.holdout_fraction = require_real(j, "holdout_fraction", ctx);
        c.split_seed = require_size(j, "split_seed", ctx);
        c.synthetic.validate();
        if (!(c.holdout_fraction > 0.0 && c.holdout_fraction < 1.0)) {
            throw ConfigError("field 'dataset.holdout_fraction' must be in (0, 1)");
        }
    } else if (kind == "csv" || kind == "idx") {
        c.kind = kind == "csv" ? DatasetKind::Csv : DatasetKind::Idx;
        c.train = resolve(base, require_string(j, "train", ctx));
        c.test = resolve(base, require_string(j, "test", ctx));
        if (c.kind == DatasetKind::Idx) {
            c.train_labels = resolve(base, require_string(j, "train_labels", ctx));
            c.test_labels = resolve(base, require_string(j, "test_labels", ctx));
        }
        c.num_classes = optional_size(j, "num_classes", ctx, 0);
    } else {
        throw ConfigError("field 'dataset.kind' must be one of gaussian_clusters, csv, idx; got '" + kind + "'");
    }
    return c;
}

json to_json(const DatasetConfig& c) {
    switch (c.kind) {
        case DatasetKind::GaussianClusters:
            return json{{"kind", "gaussian_clusters"},
                        {"num_classes", c.synthetic.num_classes},
                        {"dim", c.synthetic.dim},
                        {"samples_per_class", c.synthetic.samples_per_class},
                        {"cluster_separation", c.synthetic.cluster_separation},
                        {"noise_sigma", c.synthetic.noise_sigma},
                        {"seed", c.synthetic.seed},
                        {"holdout_fraction", c.holdout_fraction},
                        {"split_seed", c.split_seed}};
        case DatasetKind::Csv:
            return json{{"kind", "csv"}, {"train", c.train.string()}, {"test", c.test.string()},
                        {"num_classes", c.num_classes}};
        case DatasetKind::Idx:
            return json{{"kind", "idx"},
                        {"train", c.train.string()},
                        {"train_labels", c.train_labels.string()},
                        {"test", c.test.string()},
                        {"test_labels", c.test_labels.string()},
                        {"num_classes", c.num_classes}};
    }
    return {};
}

}  // namespace

void RunConfig::validate() const {
    network.validate();
    train.validate();
    finetune.validate();
    calibration.validate();
    if (k < 1 || k > network.target_width()) {
        throw ConfigError("k=" + std::to_string(k) + " out of range [1, " + std::to_string(network.target_width()) + "]");
    }
    if (ramp_steps < 1) throw ConfigError("ramp_steps must be >= 1");
    RoutingPolicy{routing.tau, routing.cost_model}.validate();
    if (routing.taus.empty()) throw ConfigError("routing.taus must not be empty");
    for (std::size_t i = 0; i < routing.taus.size(); ++i) {
        RoutingPolicy{routing.taus[i], routing.cost_model}.validate();
        if (i > 0 && routing.taus[i] < routing.taus[i - 1]) throw ConfigError("routing.taus must be sorted ascending");
    }
    if (analysis.trials < 2) throw ConfigError("analysis.trials must be >= 2");
    if (analysis.entropy_bins < 1) throw ConfigError("analysis.entropy_bins must be >= 1");
    if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    const std::size_t version = require_size(j, "version", "config");
    if (version != kRunConfigVersion) {
        throw ConfigError("unsupported config version " + std::to_string(version) + " (expected " +
                          std::to_string(kRunConfigVersion) + ")");
    }
    RunConfig c;
    c.dataset = dataset_from_json(require_object(j, "dataset", "config"), base_dir);
    try {
        c.network = network_spec_from_json(require_object(j, "network", "config"), "network");
        c.network.validate();
    } catch (const SpecError& e) {
        throw ConfigError(std::string("network: ") + e.what());
    }
    c.init_seed = require_size(j, "init_seed", "config");
    c.train = train_from_json(require_object(j, "train", "config"), "train", TrainConfig{});
    c.finetune = train_from_json(require_object(j, "finetune", "config"), "finetune", default_finetune_config());

    const json& cal = require_object(j, "calibration", "config");
    c.calibration.T = require_size(cal, "T", "calibration");
    c.calibration.batch_size = require_size(cal, "batch_size", "calibration");
    c.calibration.seed = require_size(cal, "seed", "calibration");
    c.calibration.shuffle = optional_bool(cal, "shuffle", "calibration", true);

    c.metric = metric_field(j, "metric", "config");
    c.k = require_size(j, "k", "config");
    c.ramp_steps = optional_size(j, "ramp_steps", "config", 1);

    if (j.contains("routing")) {
        const json& r = require_object(j, "routing", "config");
        if (r.contains("taus")) {
            const json& taus = r.at("taus");
            if (!taus.is_array()) throw ConfigError("field 'routing.taus' must be an array");
            c.routing.taus.clear();
            for (const auto& t : taus) {
                if (!t.is_number()) throw ConfigError("field 'routing.taus' must hold numbers");
                c.routing.taus.push_back(t.get<double>());
            }
        }
        c.routing.tau = optional_real(r, "tau", "routing", c.routing.tau);
        if (r.contains("cost_model")) c.routing.cost_model = cost_model_from_string(require_string(r, "cost_model", "routing"));
    }
    if (j.contains("analysis")) {
        const json& a = require_object(j, "analysis", "config");
        c.analysis.trials = optional_size(a, "trials", "analysis", c.analysis.trials);
        c.analysis.seed = optional_size(a, "seed", "analysis", c.analysis.seed);
        c.analysis.entropy_bins = optional_size(a, "entropy_bins", "analysis", c.analysis.entropy_bins);
        if (a.contains("compare_metric")) c.analysis.compare = metric_field(a, "compare_metric", "analysis");
    }
    c.output_dir = require_string(j, "output_dir", "config");
    try {
        c.validate();
    } catch (const SpecError& e) {
        throw ConfigError(e.what());
    }
    return c;
}

json to_json(const RunConfig& c) {
    return json{{"version", kRunConfigVersion},
                {"dataset", to_json(c.dataset)},
                {"network", to_json(c.network)},
                {"init_seed", c.init_seed},
                {"train", to_json(c.train)},
                {"finetune", to_json(c.finetune)},
                {"calibration",
                 {{"T", c.calibration.T},
                  {"batch_size", c.calibration.batch_size},
                  {"seed", c.calibration.seed},
                  {"shuffle", c.calibration.shuffle}}},
                {"metric", to_string(c.metric)},
                {"k", c.k},
                {"ramp_steps", c.ramp_steps},
                {"routing",
                 {{"taus", c.routing.taus}, {"tau", c.routing.tau}, {"cost_model", to_string(c.routing.cost_model)}}},
                {"analysis",
                 {{"trials", c.analysis.trials},
                  {"seed", c.analysis.seed},
                  {"entropy_bins", c.analysis.entropy_bins},
                  {"compare_metric", to_string(c.analysis.compare)}}},
                {"output_dir", c.output_dir.string()}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file " + path.string() + " does not exist");
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": invalid JSON at byte " + std::to_string(e.byte));
    }
    return run_config_from_json(j, path.parent_path());
}

std::filesystem::path resolve_output_dir(const RunConfig& config) {
    if (config.output_dir.is_absolute()) return config.output_dir;
    if (const char* root = std::getenv("AGF_OUTPUT_ROOT"); root && *root) return std::filesystem::path(root) / config.output_dir;
    return config.output_dir;
}

Splits load_splits(const DatasetConfig& c) {
    switch (c.kind) {
        case DatasetKind::GaussianClusters: {
            auto [train_set, test_set] = split_holdout(gen_gaussian_clusters(c.synthetic), c.holdout_fraction, c.split_seed);
            return {std::move(train_set), std::move(test_set)};
        }
        case DatasetKind::Csv: {
            Dataset tr = load_csv(c.train, c.num_classes);
            Dataset te = load_csv(c.test, c.num_classes ? c.num_classes : tr.num_classes);
            return {std::move(tr), std::move(te)};
        }
        case DatasetKind::Idx: {
            Dataset tr = load_idx(c.train, c.train_labels, c.num_classes);
            Dataset te = load_idx(c.test, c.test_labels, c.num_classes ? c.num_classes : tr.num_classes);
            return {std::move(tr), std::move(te)};
        }
    }
    throw ConfigError("unknown dataset kind");
}

std::string artifact::scores(Metric metric) { return "scores_" + to_string(metric) + ".csv"; }

std::filesystem::path require_artifact(const std::filesystem::path& dir, const std::string& name) {
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) {
        throw DependencyError("missing upstream artifact " + path.string() + " (run the stage that writes " + name +
                              " first)");
    }
    return path;
}

namespace {

void check_data(const RunConfig& config, const Splits& splits) {
    if (splits.train.sample_shape() != config.network.input_shape) {
        throw ConfigError("dataset sample shape " + shape_str(splits.train.sample_shape()) +
                          " does not match network input " + shape_str(config.network.input_shape));
    }
    if (splits.train.num_classes > config.network.num_classes()) {
        throw ConfigError("dataset has " + std::to_string(splits.train.num_classes) + " classes but the network emits " +
                          std::to_string(config.network.num_classes()));
    }
}

Splits data_for(const RunConfig& config) {
    Splits s = load_splits(config.dataset);
    check_data(config, s);
    return s;
}

Checkpoint load_stage(const std::filesystem::path& out, const std::string& name) {
    return load(require_artifact(out, name));
}

}  // namespace

TrainResult stage_train_teacher(const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
    const Splits data = data_for(config);
    std::filesystem::create_directories(out);
    TrainResult r = train(build(config.network, config.init_seed), data.train, config.train, &data.test);
    save(r.model, out / artifact::teacher);
    write_history_csv(r.history, out / artifact::teacher_history);
    log << "teacher: " << config.train.epochs << " epochs, held-out accuracy "
        << format_short(r.history.size() ? r.history.epochs.back().eval_acc : evaluate(r.model, data.test)) << "\n";
    return r;
}

ChannelScoreTable stage_calibrate(const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
    const Checkpoint teacher = load_stage(out, artifact::teacher);
    const Splits data = data_for(config);
    const ChannelScoreTable table = score_metric(config.metric, teacher, data.train, config.calibration);
    write_score_csv(table, out / artifact::scores(config.metric));
    log << "calibrate: " << table.metric << " over layer " << table.layer << " (" << table.width() << " channels)\n";
    return table;
}

Checkpoint stage_prune(const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
    const Checkpoint teacher = load_stage(out, artifact::teacher);
    Checkpoint pruned;
    PruneSpec spec;
    if (config.ramp_steps > 1) {
        const Splits data = data_for(config);
        auto r = iterative_prune(teacher, data.train, data.train, config.metric, config.calibration, config.k,
                                 config.ramp_steps, config.finetune, &data.test);
        pruned = std::move(r.model);
        spec = std::move(r.spec);
    } else {
        const ChannelScoreTable table = read_score_csv(require_artifact(out, artifact::scores(config.metric)));
        if (table.width() != teacher.spec.target_width() || table.layer != teacher.spec.target_layer) {
            throw DependencyError(artifact::scores(config.metric) + " does not match the teacher's target layer");
        }
        spec = PruneSpec{teacher.spec.target_layer, select_topk(table, config.k),
                         {to_string(config.metric), config.k, config.calibration.seed}};
        pruned = prune_structural(teacher, spec);
    }
    save(pruned, out / artifact::pruned);
    save_prune_spec(spec, out / artifact::prune_spec);
    log << "prune: kept " << spec.keep.size() << " of " << teacher.spec.target_width() << " channels, FLOPs "
        << count_flops(pruned).total << " vs " << count_flops(teacher).total << "\n";
    return pruned;
}

TrainResult stage_finetune(const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
    const Checkpoint pruned = load_stage(out, artifact::pruned);
    const Splits data = data_for(config);
    TrainResult r = finetune(pruned, data.train, config.finetune, &data.test);
    save(r.model, out / artifact::finetuned);
    write_history_csv(r.history, out / artifact::finetune_history);
    log << "finetune: " << config.finetune.epochs << " epochs, held-out accuracy "
        << format_short(evaluate(r.model, data.test)) << "\n";
    return r;
}

RoutingTrace stage_route(const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
    const Checkpoint full = load_stage(out, artifact::teacher);
    const Checkpoint expert = load_stage(out, artifact::finetuned);
    const Splits data = data_for(config);
    const RoutingTrace trace = route_cascade(expert, full, data.test, config.routing.tau);
    write_route_trace_csv(trace, out / artifact::route_trace);
    const double fp = static_cast<double>(count_flops(expert).total), ff = static_cast<double>(count_flops(full).total);
    const double f = trace.routed_fraction();
    const double cost = config.routing.cost_model == CostModel::Cascade ? cost_cascade(f, fp, ff)
                                                                        : cost_exclusive(f, fp / ff, 1.0);
    log << "route: tau " << format_short(config.routing.tau) << ", accuracy " << format_short(trace.accuracy())
        << ", routed fraction " << format_short(f) << ", " << to_string(config.routing.cost_model) << " cost "
        << format_short(cost) << "\n";
    return trace;
}

SweepResult stage_sweep(const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
    const Checkpoint full = load_stage(out, artifact::teacher);
    const Checkpoint expert = load_stage(out, artifact::finetuned);
    const Splits data = data_for(config);
    SweepResult result = sweep(expert, full, data.test, config.routing.taus);
    write_sweep_csv(result.rows, out / artifact::sweep);
    const auto front = pareto_front(result.rows, config.routing.cost_model);
    write_sweep_csv(front, out / artifact::pareto);
    log << "sweep: " << result.rows.size() << " thresholds, " << front.size() << " on the Pareto front, R = "
        << format_short(result.flops_full / result.flops_pruned) << "\n";
    return result;
}

AnalysisResult stage_analyze(const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
    const Checkpoint full = load_stage(out, artifact::teacher);
    const Checkpoint expert = load_stage(out, artifact::finetuned);
    const ChannelScoreTable primary = read_score_csv(require_artifact(out, artifact::scores(config.metric)));
    const Splits data = data_for(config);

    AnalysisResult r;
    r.stability = stability(config.metric, full, data.train, config.k, config.analysis.trials, config.analysis.seed,
                            config.calibration);
    const ChannelScoreTable other = score_metric(config.analysis.compare, full, data.train, config.calibration);
    r.orthogonality = orthogonality(primary, other, config.k);
    r.proxy_fidelity = proxy_fidelity(full, expert, data.train, config.calibration);
    const RoutingTrace trace = route_cascade(expert, full, data.test, config.routing.tau);
    r.entropy = entropy_buckets(trace, full, data.test, config.analysis.entropy_bins);

    emit_report(r.stability, out / artifact::stability);
    emit_report(r.orthogonality, out / artifact::orthogonality);
    emit_report(r.proxy_fidelity, out / artifact::proxy_fidelity);
    emit_report(r.entropy, out / artifact::entropy_buckets);

    auto ratio = [](const std::optional<double>& v) { return v ? json(*v) : json("undefined"); };
    json pairs = json::array();
    for (const auto& p : r.stability.pairs) pairs.push_back({{"a", p.trial_a}, {"b", p.trial_b}, {"jaccard", p.value}});
    emit_report(json{{"stability",
                      {{"metric", r.stability.metric},
                       {"k", r.stability.k},
                       {"trials", r.stability.trials},
                       {"pairs", pairs},
                       {"mean_jaccard", r.stability.mean}}},
                     {"orthogonality",
                      {{"metric_a", r.orthogonality.metric_a},
                       {"metric_b", r.orthogonality.metric_b},
                       {"k", r.orthogonality.k},
                       {"jaccard", r.orthogonality.jaccard}}},
                     {"proxy_fidelity",
                      {{"l1_ratio", ratio(r.proxy_fidelity.l1_ratio)}, {"agf_ratio", ratio(r.proxy_fidelity.agf_ratio)}}},
                     {"routing_tau", config.routing.tau}},
                out / artifact::summary);

    log << "analyze: " << r.stability.metric << " mean Jaccard " << format_short(r.stability.mean) << ", J("
        << r.orthogonality.metric_a << ", " << r.orthogonality.metric_b << ") " << format_short(r.orthogonality.jaccard)
        << "\n";
    return r;
}

void run_pipeline(const RunConfig& config, const std::filesystem::path& out, std::ostream& log) {
    stage_train_teacher(config, out, log);
    stage_calibrate(config, out, log);
    stage_prune(config, out, log);
    stage_finetune(config, out, log);
    stage_route(config, out, log);
    stage_sweep(config, out, log);
    stage_analyze(config, out, log);
}

}  // namespace agf
