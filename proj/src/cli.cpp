#include "agf/cli.hpp"

#include <functional>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "agf/csv.hpp"
#include "agf/demos.hpp"
#include "agf/errors.hpp"
#include "agf/pipeline.hpp"

namespace agf {

namespace {

class UsageError : public Error {
  public:
    using Error::Error;
};

struct Overrides {
    std::string config;
    std::string output_dir;
    std::string metric;
    std::optional<std::size_t> T;
    std::optional<std::size_t> k;
    std::optional<double> tau;
};

RunConfig resolve_config(const Overrides& o) {
    RunConfig c = load_run_config(o.config);
    if (!o.output_dir.empty()) c.output_dir = o.output_dir;
    if (!o.metric.empty()) c.metric = metric_from_string(o.metric);
    if (o.T) c.calibration.T = *o.T;
    if (o.k) {
        if (*o.k < 1 || *o.k > c.network.target_width()) {
            throw UsageError("--k must be in [1, " + std::to_string(c.network.target_width()) + "], got " +
                             std::to_string(*o.k));
        }
        c.k = *o.k;
    }
    if (o.tau) c.routing.tau = *o.tau;
    try {
        c.validate();
    } catch (const SpecError& e) {
        throw ConfigError(std::string("network: ") + e.what());
    }
    return c;
}

std::filesystem::path demo_dir(const std::string& flag, const std::string& fallback) {
    RunConfig shell;
    shell.output_dir = flag.empty() ? fallback : flag;
    return resolve_output_dir(shell);
}

void verdict(std::ostream& out, const std::string& name, bool pass, const std::string& detail) {
    out << (pass ? "PASS" : "FAIL") << ": " << name << " - " << detail << "\n";
}

int demo_cancellation(std::ostream& out, const std::filesystem::path& dir, std::uint64_t seed) {
    const CancellationDemo d = run_cancellation_demo(seed);
    std::filesystem::create_directories(dir);
    write_cancellation_csv(d, dir / "cancellation_scores.csv");
    const std::size_t c = d.designated;
    out << "designated channel " << c << ": AGF " << format_short(d.agf[c]) << " (median " << format_short(d.agf_median)
        << "), net Taylor " << format_short(d.taylor[c]) << " (median " << format_short(d.taylor_median) << ")\n";
    verdict(out, "signal cancellation", d.pass(),
            "AGF rank of the probe channel above median, net Taylor below, |net Taylor| < 1e-6, AGF > 0.1");
    return kExitOk;
}

int demo_phase_transition(std::ostream& out, const std::filesystem::path& dir) {
    const PhaseTransitionConfig config = PhaseTransitionConfig::defaults();
    const PhaseTransitionDemo d = run_phase_transition_demo(config);
    std::filesystem::create_directories(dir);
    write_phase_transition_csv(d, dir / "phase_transition.csv");
    out << "teacher held-out accuracy " << format_short(d.teacher_accuracy) << ", k = " << config.k << "\n";
    for (const auto& v : d.variants)
        out << "  " << v.name << ": mean " << format_short(v.mean) << ", std " << format_short(v.stddev) << "\n";
    verdict(out, "phase transition", d.pass(),
            "every inherited variant beats scratch by >= " + format_short(config.margin) +
                " and AGF std <= random std over " + std::to_string(config.seeds.size()) + " seeds");
    return kExitOk;
}

int demo_proxy_fidelity(std::ostream& out, const std::filesystem::path& dir) {
    const ProxyFidelityDemo d = run_proxy_fidelity_demo(ProxyFidelityConfig::defaults());
    std::filesystem::create_directories(dir);
    write_proxy_fidelity_demo_csv(d, dir / "proxy_fidelity.csv");
    out << "reference sums: l1 ratio " << format_short(*d.reference.l1_ratio) << ", AGF ratio "
        << format_short(*d.reference.agf_ratio) << "\n";
    for (std::size_t i = 0; i < d.measured.size(); ++i) {
        const auto& r = d.measured[i];
        out << "  seed " << d.seeds[i] << ": l1 ratio " << (r.l1_ratio ? format_short(*r.l1_ratio) : "undefined")
            << ", AGF ratio " << (r.agf_ratio ? format_short(*r.agf_ratio) : "undefined") << "\n";
    }
    verdict(out, "proxy fidelity", d.pass(), "AGF ratio < l1 ratio on every converged teacher");
    return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Channel pruning with absolute feature-gradient utility, and confidence-cascade routing", "agf"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "agf 0.1.0");

    Overrides o;
    std::function<int()> action;

    auto add_stage = [&](const std::string& name, const std::string& help) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("-c,--config", o.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--output-dir", o.output_dir, "Override the config's output_dir");
        return sub;
    };
    auto run_stage = [&](auto stage) {
        return [&, stage]() {
            const RunConfig c = resolve_config(o);
            stage(c, resolve_output_dir(c));
            return static_cast<int>(kExitOk);
        };
    };

    CLI::App* train_cmd = add_stage("train-teacher", "Train the full model");
    train_cmd->callback([&] { action = run_stage([&](const RunConfig& c, const auto& dir) { stage_train_teacher(c, dir, out); }); });

    CLI::App* cal_cmd = add_stage("calibrate", "Score target-layer channels");
    cal_cmd->add_option("--metric", o.metric, "Importance metric")->check(CLI::IsMember(metric_names()));
    cal_cmd->add_option("--T", o.T, "Calibration batches")->check(CLI::PositiveNumber);
    cal_cmd->callback([&] {
        action = run_stage([&](const RunConfig& c, const auto& dir) {
            if (o.T && is_data_free(c.metric)) {
                err << "warning: --T is ignored by the data-free metric " << to_string(c.metric) << "\n";
            }
            stage_calibrate(c, dir, out);
        });
    });

    CLI::App* prune_cmd = add_stage("prune", "Remove all but the top-k channels");
    prune_cmd->add_option("--k", o.k, "Channels to keep");
    prune_cmd->add_option("--metric", o.metric, "Score table to use")->check(CLI::IsMember(metric_names()));
    prune_cmd->callback([&] { action = run_stage([&](const RunConfig& c, const auto& dir) { stage_prune(c, dir, out); }); });

    CLI::App* ft_cmd = add_stage("finetune", "Fine-tune the pruned model");
    ft_cmd->callback([&] { action = run_stage([&](const RunConfig& c, const auto& dir) { stage_finetune(c, dir, out); }); });

    CLI::App* route_cmd = add_stage("route", "Cascade the pruned and full experts at one threshold");
    route_cmd->add_option("--tau", o.tau, "Confidence threshold")->check(CLI::Range(0.0, 1.0));
    route_cmd->callback([&] { action = run_stage([&](const RunConfig& c, const auto& dir) { stage_route(c, dir, out); }); });

    CLI::App* sweep_cmd = add_stage("sweep", "Sweep thresholds and extract the Pareto front");
    sweep_cmd->callback([&] { action = run_stage([&](const RunConfig& c, const auto& dir) { stage_sweep(c, dir, out); }); });

    CLI::App* analyze_cmd = add_stage("analyze", "Stability, orthogonality, proxy fidelity and entropy reports");
    analyze_cmd->callback([&] { action = run_stage([&](const RunConfig& c, const auto& dir) { stage_analyze(c, dir, out); }); });

    CLI::App* all_cmd = add_stage("pipeline", "Run every stage in order");
    all_cmd->add_option("--k", o.k, "Channels to keep");
    all_cmd->callback([&] { action = run_stage([&](const RunConfig& c, const auto& dir) { run_pipeline(c, dir, out); }); });

    std::string demo_out;
    std::uint64_t demo_seed = 0;
    CLI::App* d1 = app.add_subcommand("demo-cancellation", "Signal-cancellation probe");
    d1->add_option("-o,--output-dir", demo_out, "Evidence directory");
    d1->add_option("--seed", demo_seed, "Probe seed");
    d1->callback([&] { action = [&] { return demo_cancellation(out, demo_dir(demo_out, "demo-cancellation"), demo_seed); }; });
    CLI::App* d2 = app.add_subcommand("demo-phase-transition", "Inherited vs scratch narrow networks");
    d2->add_option("-o,--output-dir", demo_out, "Evidence directory");
    d2->callback([&] { action = [&] { return demo_phase_transition(out, demo_dir(demo_out, "demo-phase-transition")); }; });
    CLI::App* d3 = app.add_subcommand("demo-proxy-fidelity", "Energy-proxy ratios on converged teachers");
    d3->add_option("-o,--output-dir", demo_out, "Evidence directory");
    d3->callback([&] { action = [&] { return demo_proxy_fidelity(out, demo_dir(demo_out, "demo-proxy-fidelity")); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        return action();
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DependencyError& e) {
        err << "dependency error: " << e.what() << "\n";
        return kExitDependency;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace agf
