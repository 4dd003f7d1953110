#include "fedsim/cli.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>

#include <CLI11.hpp>

#include "fedsim/config.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/orchestrator.hpp"

namespace fedsim {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitDivergence = 2;

struct CommonOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
    int threads = 1;
    bool gamma = false;
};

ExperimentConfig require_experiment(const ParsedConfig& parsed) {
    if (const auto* cfg = std::get_if<ExperimentConfig>(&parsed)) return *cfg;
    throw ConfigError("config file holds a sweep; use the `sweep` subcommand");
}

SweepSpec require_sweep(const ParsedConfig& parsed) {
    if (const auto* spec = std::get_if<SweepSpec>(&parsed)) return *spec;
    throw ConfigError("config file holds a single experiment; use the `run` subcommand");
}

std::optional<double> partition_beta(const ExperimentConfig& cfg) {
    if (std::holds_alternative<SyntheticConfig>(cfg.dataset)) return std::nullopt;
    return cfg.partition.beta;
}

double final_accuracy(const RunResult& result) {
    // The last record is the explicit final aggregation and always carries one.
    return result.records.back().test_accuracy.value();
}

std::optional<double> run_gamma(const FederatedDataset& data, const ModelSpec& spec) {
    const GammaEstimate estimate = estimate_gamma(data.clients, fedavg_weights(data.clients), spec);
    if (!estimate.converged) {
        std::fprintf(stderr, "warning: gamma estimate did not fully converge\n");
    }
    if (estimate.clamped) {
        std::fprintf(stderr, "warning: gamma clamped to 0 (raw estimate was negative)\n");
    }
    return estimate.gamma;
}

int do_run(const CommonOptions& opts) {
    const ExperimentConfig cfg = require_experiment(parse_config(opts.config_path, opts.seed));
    const FederatedDataset data = build_dataset(cfg);
    const RunOptions run_opts{opts.threads, false};
    const RunResult result = run_federated(cfg, data, run_opts);

    std::filesystem::create_directories(opts.out_dir);
    const std::filesystem::path records_path = std::filesystem::path(opts.out_dir) / "records.jsonl";
    const std::filesystem::path summary_path = std::filesystem::path(opts.out_dir) / "summary.csv";
    write_records_jsonl(records_path, result.records);

    SummaryRow row;
    row.strategy = strategy_name(cfg.strategy.kind);
    if (cfg.strategy.kind == StrategyKind::FedSkip) row.delta = cfg.strategy.delta;
    row.beta = partition_beta(cfg);
    row.seed = cfg.seed;
    row.final_accuracy = final_accuracy(result);
    row.mean_drift_variance = mean_drift_variance(result.records);
    if (opts.gamma) row.gamma = run_gamma(data, model_spec_for(cfg, data));
    write_summary_csv(summary_path, {row});

    std::printf("final_accuracy=%.6f\n", *row.final_accuracy);
    std::printf("records=%s\n", records_path.c_str());
    std::printf("summary=%s\n", summary_path.c_str());
    return kExitOk;
}

int do_sweep(const CommonOptions& opts) {
    const SweepSpec spec = require_sweep(parse_config(opts.config_path, opts.seed));
    const std::vector<SweepCell> cells = expand_sweep(spec);
    std::filesystem::create_directories(opts.out_dir);

    struct CellOutcome {
        SweepCell cell;
        std::vector<RoundRecord> records;
        bool diverged = false;
    };
    std::vector<CellOutcome> outcomes;
    std::map<std::string, std::optional<double>> group_gamma;
    auto group_key = [](const SweepCell& cell) {
        std::string key = cell.beta ? std::to_string(*cell.beta) : "-";
        key += "|" + std::to_string(cell.seed);
        return key;
    };

    bool any_divergence = false;
    for (const SweepCell& cell : cells) {
        CellOutcome outcome;
        outcome.cell = cell;
        std::fprintf(stderr, "sweep: %s\n", cell.label().c_str());
        try {
            const FederatedDataset data = build_dataset(cell.config);
            const RunResult result = run_federated(cell.config, data, {opts.threads, false});
            outcome.records = result.records;
            write_records_jsonl(std::filesystem::path(opts.out_dir) /
                                    ("records_" + cell.label() + ".jsonl"),
                                outcome.records);
            if (opts.gamma && !group_gamma.contains(group_key(cell))) {
                group_gamma[group_key(cell)] = run_gamma(data, model_spec_for(cell.config, data));
            }
        } catch (const DivergenceError& e) {
            std::fprintf(stderr, "sweep: %s diverged: %s\n", cell.label().c_str(), e.what());
            outcome.diverged = true;
            any_divergence = true;
        }
        outcomes.push_back(std::move(outcome));
    }

    // Baselines per (beta, seed) group: the fedavg cell's best accuracy is the
    // target; its own rounds-to-that-accuracy is the speedup denominator.
    struct Baseline {
        double target = 0.0;
        std::optional<int> rounds;
    };
    std::map<std::string, Baseline> baselines;
    for (const CellOutcome& outcome : outcomes) {
        if (outcome.cell.strategy != StrategyKind::FedAvg || outcome.diverged) continue;
        const auto best = best_accuracy(outcome.records);
        if (!best) continue;
        Baseline baseline;
        baseline.target = *best;
        baseline.rounds = efficiency_summary(outcome.records, *best).rounds_to_target;
        baselines[group_key(outcome.cell)] = baseline;
    }

    std::vector<SummaryRow> rows;
    for (const CellOutcome& outcome : outcomes) {
        SummaryRow row;
        row.strategy = strategy_name(outcome.cell.strategy);
        row.delta = outcome.cell.delta;
        row.beta = outcome.cell.beta ? outcome.cell.beta : partition_beta(outcome.cell.config);
        row.seed = outcome.cell.seed;
        if (!outcome.diverged) {
            row.final_accuracy = outcome.records.back().test_accuracy;
            row.mean_drift_variance = mean_drift_variance(outcome.records);
            const auto it = baselines.find(group_key(outcome.cell));
            if (it != baselines.end()) {
                const EfficiencySummary eff =
                    efficiency_summary(outcome.records, it->second.target, it->second.rounds);
                row.rounds_to_target = eff.rounds_to_target;
                row.aggregations_to_target = eff.aggregations_to_target;
                row.speedup = eff.speedup_vs_baseline;
            }
            if (opts.gamma) {
                const auto git = group_gamma.find(group_key(outcome.cell));
                if (git != group_gamma.end()) row.gamma = git->second;
            }
        }
        rows.push_back(std::move(row));
    }

    const std::filesystem::path summary_path = std::filesystem::path(opts.out_dir) / "summary.csv";
    write_summary_csv(summary_path, rows);
    std::printf("cells=%zu\n", outcomes.size());
    std::printf("summary=%s\n", summary_path.c_str());
    return any_divergence ? kExitDivergence : kExitOk;
}

int do_toy(const CommonOptions& opts) {
    const ExperimentConfig cfg = require_experiment(parse_config(opts.config_path, opts.seed));
    const ToyResult result = run_toy(cfg, {opts.threads, false});
    std::printf("local_accuracy=%.6f\n", result.local_accuracy);
    std::printf("cross_accuracy=%.6f\n", result.cross_accuracy);
    return kExitOk;
}

struct AnalyzeOptions {
    std::string records_path;
    std::optional<double> target;
    std::optional<int> baseline_rounds;
    std::optional<int> bound_delta;
    std::optional<double> bound_lr;
    std::optional<double> bound_steps;
    std::optional<double> bound_g;
};

int do_analyze(const AnalyzeOptions& opts) {
    const std::vector<RoundRecord> records = read_records_jsonl(opts.records_path);
    if (const auto best = best_accuracy(records)) {
        std::printf("best_accuracy=%.6f\n", *best);
    }
    if (const auto drift = mean_drift_variance(records)) {
        std::printf("mean_drift_variance=%.6g\n", *drift);
    }
    if (records.back().test_accuracy) {
        std::printf("final_accuracy=%.6f\n", *records.back().test_accuracy);
    }
    std::printf("aggregations=%d\n", records.back().aggregations_so_far);
    std::printf("comm_rounds=%d\n", records.back().comm_rounds_so_far);

    if (opts.target) {
        const EfficiencySummary eff = efficiency_summary(records, *opts.target, opts.baseline_rounds);
        if (eff.rounds_to_target) {
            std::printf("rounds_to_target=%d\n", *eff.rounds_to_target);
            std::printf("aggregations_to_target=%d\n", *eff.aggregations_to_target);
        } else {
            std::printf("rounds_to_target=never\n");
        }
        if (eff.speedup_vs_baseline) std::printf("speedup=%.4f\n", *eff.speedup_vs_baseline);
    }

    if (opts.bound_delta && opts.bound_lr && opts.bound_steps && opts.bound_g) {
        const double rhs = 4.0 * *opts.bound_delta * (*opts.bound_lr) * (*opts.bound_lr) *
                           (*opts.bound_steps) * (*opts.bound_steps) * (*opts.bound_g) *
                           (*opts.bound_g);
        double min_margin = std::numeric_limits<double>::infinity();
        for (const RoundRecord& rec : records) {
            if (rec.drift_variance) min_margin = std::min(min_margin, rhs - *rec.drift_variance);
        }
        std::printf("bound_rhs=%.6g\n", rhs);
        std::printf("bound_min_margin=%.6g\n", min_margin);
        std::printf("bound_holds=%s\n", min_margin >= 0.0 ? "true" : "false");
    }
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    static const char* kProgram = "fedsim";
    argv.push_back(kProgram);
    for (const std::string& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Deterministic federated-learning simulator"};
    app.require_subcommand(1);

    CommonOptions run_opts;
    CLI::App* run_cmd = app.add_subcommand("run", "Run a single experiment");
    run_cmd->add_option("--config", run_opts.config_path, "JSON experiment config")->required();
    run_cmd->add_option("--seed", run_opts.seed, "Override the config seed");
    run_cmd->add_option("--out-dir", run_opts.out_dir, "Output directory");
    run_cmd->add_option("--threads", run_opts.threads, "Worker threads for client training");
    run_cmd->add_flag("--gamma", run_opts.gamma, "Also estimate the non-IID degree");

    CommonOptions sweep_opts;
    CLI::App* sweep_cmd = app.add_subcommand("sweep", "Run an experiment matrix");
    sweep_cmd->add_option("--config", sweep_opts.config_path, "JSON sweep config")->required();
    sweep_cmd->add_option("--seed", sweep_opts.seed, "Override the base config seed");
    sweep_cmd->add_option("--out-dir", sweep_opts.out_dir, "Output directory");
    sweep_cmd->add_option("--threads", sweep_opts.threads, "Worker threads for client training");
    sweep_cmd->add_flag("--gamma", sweep_opts.gamma, "Also estimate the non-IID degree per group");

    CommonOptions toy_opts;
    CLI::App* toy_cmd = app.add_subcommand("toy", "Local vs Cross training comparison");
    toy_cmd->add_option("--config", toy_opts.config_path, "JSON experiment config")->required();
    toy_cmd->add_option("--seed", toy_opts.seed, "Override the config seed");
    toy_cmd->add_option("--threads", toy_opts.threads, "Worker threads for client training");

    AnalyzeOptions analyze_opts;
    CLI::App* analyze_cmd = app.add_subcommand("analyze", "Recompute summaries from JSONL records");
    analyze_cmd->add_option("--records", analyze_opts.records_path, "JSONL record file")->required();
    analyze_cmd->add_option("--target", analyze_opts.target, "Target accuracy");
    analyze_cmd->add_option("--baseline-rounds", analyze_opts.baseline_rounds,
                            "Baseline rounds for speedup");
    analyze_cmd->add_option("--bound-delta", analyze_opts.bound_delta, "Skip period for bound check");
    analyze_cmd->add_option("--bound-lr", analyze_opts.bound_lr, "Learning rate for bound check");
    analyze_cmd->add_option("--bound-steps", analyze_opts.bound_steps,
                            "Local steps per round for bound check");
    analyze_cmd->add_option("--bound-g", analyze_opts.bound_g,
                            "Gradient-norm bound estimate for bound check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (run_cmd->parsed()) return do_run(run_opts);
        if (sweep_cmd->parsed()) return do_sweep(sweep_opts);
        if (toy_cmd->parsed()) return do_toy(toy_opts);
        if (analyze_cmd->parsed()) return do_analyze(analyze_opts);
        return kExitConfigError;
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "error: training diverged: %s\n", e.what());
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfigError;
    }
}

}  // namespace fedsim
