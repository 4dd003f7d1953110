#include "fedsim/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "fedsim/metrics.hpp"
#include "fedsim/parallel.hpp"

namespace fedsim {

namespace {

using json = nlohmann::ordered_json;

std::int64_t elapsed_ms(std::chrono::steady_clock::time_point since) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() -
                                                                 since)
        .count();
}

void validate_run_config(const ExperimentConfig& cfg, const FederatedDataset& data) {
    if (cfg.rounds < 1) throw std::invalid_argument("rounds must be >= 1");
    if (!(cfg.sample_fraction > 0.0 && cfg.sample_fraction <= 1.0)) {
        throw std::invalid_argument("sample_fraction must be in (0, 1]");
    }
    if (cfg.eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
    if (data.clients.empty()) throw std::runtime_error("no clients after filtering");
    if (data.test.empty()) throw std::runtime_error("empty test set");
    if (cfg.strategy.kind == StrategyKind::FedSkip && cfg.strategy.delta < 1) {
        throw std::invalid_argument("fedskip delta must be >= 1");
    }
    if (cfg.strategy.kind == StrategyKind::FedProx && cfg.strategy.mu < 0.0) {
        throw std::invalid_argument("fedprox mu must be >= 0");
    }
}

}  // namespace

std::string round_action_name(RoundAction action) {
    switch (action) {
        case RoundAction::Init: return "init";
        case RoundAction::Aggregate: return "aggregate";
        case RoundAction::Skip: return "skip";
    }
    throw std::logic_error("unknown round action");
}

FederatedDataset build_dataset(const ExperimentConfig& cfg) {
    FederatedDataset data;
    if (const auto* blob = std::get_if<BlobSpec>(&cfg.dataset)) {
        BlobDataset blobs = generate_blobs(blob->num_classes, blob->input_dim, blob->n_total,
                                           blob->class_sep, blob->seed);
        data.clients = dirichlet_partition(blobs.train, cfg.partition);
        data.test = std::move(blobs.test);
    } else if (const auto* synth = std::get_if<SyntheticConfig>(&cfg.dataset)) {
        data = generate_synthetic_leaf(*synth);
    } else {
        data = load_federated_tsv(std::get<TsvSpec>(cfg.dataset).dir);
    }
    data.clients = filter_min_samples(data.clients, cfg.min_samples);
    return data;
}

ModelSpec model_spec_for(const ExperimentConfig& cfg, const FederatedDataset& data) {
    int input_dim = 0;
    int max_label = -1;
    for (const ClientDataset& c : data.clients) {
        for (const Example& ex : c.train) {
            input_dim = static_cast<int>(ex.features.size());
            max_label = std::max(max_label, ex.label);
        }
    }
    for (const Example& ex : data.test) max_label = std::max(max_label, ex.label);
    if (input_dim <= 0 || max_label < 0) throw std::runtime_error("cannot infer model dimensions");
    return make_linear_softmax(input_dim, max_label + 1);
}

std::vector<std::size_t> sample_clients(std::size_t num_clients, double fraction, Rng& rng) {
    if (!(fraction > 0.0 && fraction <= 1.0)) {
        throw std::invalid_argument("sample_clients: fraction must be in (0, 1]");
    }
    if (num_clients == 0) throw std::invalid_argument("sample_clients: no clients");
    std::size_t k = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(num_clients)));
    k = std::clamp<std::size_t>(k, 1, num_clients);

    std::vector<std::size_t> indices(num_clients);
    for (std::size_t i = 0; i < num_clients; ++i) indices[i] = i;
    // Partial Fisher-Yates: the first k entries are a uniform sample.
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.uniform_index(num_clients - i));
        std::swap(indices[i], indices[j]);
    }
    indices.resize(k);
    std::sort(indices.begin(), indices.end());
    return indices;
}

RunResult run_federated(const ExperimentConfig& cfg, const FederatedDataset& data,
                        const RunOptions& opts) {
    validate_run_config(cfg, data);
    const ModelSpec spec = model_spec_for(cfg, data);
    const ParamVector w0 = init_params(spec, cfg.seed);

    const std::size_t n_clients = data.clients.size();
    const bool fedskip = cfg.strategy.kind == StrategyKind::FedSkip;
    const bool fednova = cfg.strategy.kind == StrategyKind::FedNova;
    const bool scaffold = cfg.strategy.kind == StrategyKind::Scaffold;
    const bool fedprox = cfg.strategy.kind == StrategyKind::FedProx;
    const SkipSchedule schedule{fedskip ? cfg.strategy.delta : 1, cfg.rounds};

    // Slot count: round(fraction * N), at least one.
    std::size_t num_slots = static_cast<std::size_t>(
        std::llround(cfg.sample_fraction * static_cast<double>(n_clients)));
    num_slots = std::clamp<std::size_t>(num_slots, 1, n_clients);

    std::vector<ParamVector> models(num_slots);    // post-training models of the previous round
    std::vector<LocalResult> results(num_slots);
    std::vector<ParamVector> starts(num_slots);
    SampleLedger ledger(num_slots);
    ParamVector prev_broadcast = w0;  // model distributed at the current round (FedNova's anchor)

    ParamVector c_global = scaffold ? zeros_like(spec) : ParamVector{};
    std::vector<ParamVector> c_locals;
    if (scaffold) c_locals.assign(n_clients, zeros_like(spec));

    // The aggregation rule shared by round-start, per-round evaluation and the
    // final aggregation. FedNova normalizes by local step counts; every other
    // strategy takes the (cumulative-)weighted average.
    auto combine = [&](const std::vector<double>& weights) {
        if (fednova) return fednova_aggregate(prev_broadcast, results, weights);
        return weighted_average(models, weights);
    };

    RunResult run;
    run.records.reserve(cfg.rounds + 1);
    if (opts.record_trace) run.trace.emplace();
    int aggregations = 0;

    for (int t = 0; t < cfg.rounds; ++t) {
        const auto round_start = std::chrono::steady_clock::now();

        Rng sample_rng(stream_seed(cfg.seed, stream_tag::kSampleClients,
                                   static_cast<std::uint64_t>(t)));
        const std::vector<std::size_t> sampled =
            sample_clients(n_clients, cfg.sample_fraction, sample_rng);
        if (sampled.size() != num_slots) {
            throw std::logic_error("sampled client count does not match slot count");
        }

        RoundAction action;
        if (t == 0) {
            action = RoundAction::Init;
            for (auto& s : starts) s = w0;
        } else if (is_skip_round(t, schedule)) {
            action = RoundAction::Skip;
            Rng shuffle_rng(stream_seed(cfg.seed, stream_tag::kShuffleModels,
                                        static_cast<std::uint64_t>(t)));
            std::vector<std::size_t> perm;
            starts = shuffle_scatter(models, shuffle_rng, &perm);
            ledger.apply_permutation(perm);
        } else {
            action = RoundAction::Aggregate;
            const ParamVector aggregated = combine(cumulative_weights(ledger));
            ++aggregations;
            ledger.begin_period();
            for (auto& s : starts) s = aggregated;
            prev_broadcast = aggregated;
        }

        if (run.trace) {
            RunTrace::Round snapshot;
            snapshot.models = starts;
            std::int64_t total = 0;
            for (std::size_t k = 0; k < num_slots; ++k) total += data.clients[sampled[k]].n_samples;
            snapshot.weights.resize(num_slots);
            for (std::size_t k = 0; k < num_slots; ++k) {
                snapshot.weights[k] = static_cast<double>(data.clients[sampled[k]].n_samples) /
                                      static_cast<double>(total);
            }
            run.trace->rounds.push_back(std::move(snapshot));
        }

        // Local training; one private RNG stream per (round, client), output
        // written into per-slot storage, so the result is independent of how
        // tasks are scheduled across threads.
        std::vector<std::string> divergence(num_slots);
        parallel_for(num_slots, opts.threads, [&](std::size_t k) {
            const ClientDataset& client = data.clients[sampled[k]];
            LocalConfig local = cfg.local;
            local.seed = stream_seed(cfg.seed, stream_tag::kLocalTraining,
                                     static_cast<std::uint64_t>(t),
                                     static_cast<std::uint64_t>(client.client_id));
            if (fedprox) local.prox_mu = cfg.strategy.mu;
            const ParamVector* anchor = fedprox ? &starts[k] : nullptr;
            ControlVariates controls;
            const ControlVariates* controls_ptr = nullptr;
            if (scaffold) {
                controls.c_global = c_global;
                controls.c_local = c_locals[static_cast<std::size_t>(client.client_id)];
                controls_ptr = &controls;
            }
            try {
                results[k] = train_local(starts[k], client, local, anchor, controls_ptr);
            } catch (const DivergenceError& e) {
                divergence[k] = e.what();
            }
        });
        for (std::size_t k = 0; k < num_slots; ++k) {
            if (!divergence[k].empty()) {
                throw DivergenceError("round " + std::to_string(t) + ", client " +
                                      std::to_string(data.clients[sampled[k]].client_id) + ": " +
                                      divergence[k]);
            }
        }

        std::vector<std::int64_t> counts(num_slots);
        for (std::size_t k = 0; k < num_slots; ++k) {
            models[k] = results[k].params;
            counts[k] = data.clients[sampled[k]].n_samples;
            run.max_grad_norm = std::max(run.max_grad_norm, results[k].max_grad_norm);
        }
        ledger.record_round(counts);

        if (scaffold) {
            std::vector<ParamVector> deltas;
            deltas.reserve(num_slots);
            for (std::size_t k = 0; k < num_slots; ++k) {
                if (!results[k].control_delta) {
                    throw std::logic_error("scaffold training returned no control delta");
                }
                deltas.push_back(*results[k].control_delta);
                axpy_in_place(c_locals[static_cast<std::size_t>(data.clients[sampled[k]].client_id)],
                              1.0, *results[k].control_delta);
            }
            const double fraction =
                static_cast<double>(num_slots) / static_cast<double>(n_clients);
            c_global = scaffold_server_update(c_global, deltas, fraction);
        }

        const std::vector<double> weights = cumulative_weights(ledger);
        RoundRecord rec;
        rec.round = t;
        rec.action = action;
        rec.aggregations_so_far = aggregations;
        rec.comm_rounds_so_far = t + 1;
        rec.drift_variance = client_drift_variance(models, weights);
        if (t % cfg.eval_every == 0) {
            rec.test_accuracy = evaluate_accuracy(spec, combine(weights), data.test);
        }
        rec.wall_time_ms = elapsed_ms(round_start);
        run.records.push_back(rec);

        if (run.trace) {
            auto& steps = run.trace->rounds.back().steps;
            steps.resize(num_slots);
            for (std::size_t k = 0; k < num_slots; ++k) steps[k] = results[k].steps_taken;
        }
    }

    // Explicit final aggregation: evaluation always uses the weighted average
    // of the latest models, whether or not the last round would have skipped.
    const auto final_start = std::chrono::steady_clock::now();
    const std::vector<double> final_weights = cumulative_weights(ledger);
    run.final_params = combine(final_weights);
    ++aggregations;

    RoundRecord final_rec;
    final_rec.round = cfg.rounds;
    final_rec.action = RoundAction::Aggregate;
    final_rec.aggregations_so_far = aggregations;
    final_rec.comm_rounds_so_far = cfg.rounds;  // no additional communication
    final_rec.drift_variance = client_drift_variance(models, final_weights);
    final_rec.test_accuracy = evaluate_accuracy(spec, run.final_params, data.test);
    final_rec.wall_time_ms = elapsed_ms(final_start);
    run.records.push_back(final_rec);
    return run;
}

RunResult run_federated(const ExperimentConfig& cfg, const RunOptions& opts) {
    return run_federated(cfg, build_dataset(cfg), opts);
}

double run_local_mode(const ExperimentConfig& cfg, const FederatedDataset& data,
                      const RunOptions& opts) {
    if (data.clients.empty()) throw std::runtime_error("no clients");
    const ModelSpec spec = model_spec_for(cfg, data);
    const ParamVector w0 = init_params(spec, cfg.seed);

    std::vector<double> accuracy(data.clients.size(), 0.0);
    parallel_for(data.clients.size(), opts.threads, [&](std::size_t k) {
        const ClientDataset& client = data.clients[k];
        ParamVector model = w0;
        // One epoch per call so the seed stream matches cross mode exactly.
        for (int e = 0; e < cfg.local.epochs; ++e) {
            LocalConfig local = cfg.local;
            local.epochs = 1;
            local.seed = stream_seed(cfg.seed, stream_tag::kLocalTraining,
                                     static_cast<std::uint64_t>(e),
                                     static_cast<std::uint64_t>(client.client_id));
            model = train_local(model, client, local).params;
        }
        accuracy[k] = evaluate_accuracy(spec, model, data.test);
    });

    double mean = 0.0;
    for (double a : accuracy) mean += a;
    return mean / static_cast<double>(accuracy.size());
}

double run_cross_mode(const ExperimentConfig& cfg, const FederatedDataset& data) {
    if (data.clients.empty()) throw std::runtime_error("no clients");
    const ModelSpec spec = model_spec_for(cfg, data);
    ParamVector model = init_params(spec, cfg.seed);

    // Same total epoch budget as local mode, one epoch per stop, clients
    // visited round-robin by position.
    for (int e = 0; e < cfg.local.epochs; ++e) {
        const ClientDataset& client = data.clients[e % data.clients.size()];
        LocalConfig local = cfg.local;
        local.epochs = 1;
        local.seed = stream_seed(cfg.seed, stream_tag::kLocalTraining,
                                 static_cast<std::uint64_t>(e),
                                 static_cast<std::uint64_t>(client.client_id));
        model = train_local(model, client, local).params;
    }
    return evaluate_accuracy(spec, model, data.test);
}

ToyResult run_toy(const ExperimentConfig& cfg, const RunOptions& opts) {
    const FederatedDataset data = build_dataset(cfg);
    ToyResult result;
    result.local_accuracy = run_local_mode(cfg, data, opts);
    result.cross_accuracy = run_cross_mode(cfg, data);
    return result;
}

std::string record_to_json(const RoundRecord& record) {
    json j;
    j["round"] = record.round;
    j["action"] = round_action_name(record.action);
    if (record.test_accuracy) {
        j["test_accuracy"] = *record.test_accuracy;
    } else {
        j["test_accuracy"] = nullptr;
    }
    if (record.drift_variance) {
        j["drift_variance"] = *record.drift_variance;
    } else {
        j["drift_variance"] = nullptr;
    }
    j["aggregations_so_far"] = record.aggregations_so_far;
    j["comm_rounds_so_far"] = record.comm_rounds_so_far;
    return j.dump();
}

void write_records_jsonl(const std::filesystem::path& path,
                         const std::vector<RoundRecord>& records) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
        for (const RoundRecord& rec : records) out << record_to_json(rec) << '\n';
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::vector<RoundRecord> read_records_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    std::vector<RoundRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        RoundRecord rec;
        rec.round = j.at("round").get<int>();
        const std::string action = j.at("action").get<std::string>();
        if (action == "init") {
            rec.action = RoundAction::Init;
        } else if (action == "aggregate") {
            rec.action = RoundAction::Aggregate;
        } else if (action == "skip") {
            rec.action = RoundAction::Skip;
        } else {
            throw std::runtime_error("unknown action in record: " + action);
        }
        if (!j.at("test_accuracy").is_null()) rec.test_accuracy = j.at("test_accuracy").get<double>();
        if (!j.at("drift_variance").is_null()) {
            rec.drift_variance = j.at("drift_variance").get<double>();
        }
        rec.aggregations_so_far = j.at("aggregations_so_far").get<int>();
        rec.comm_rounds_so_far = j.at("comm_rounds_so_far").get<int>();
        records.push_back(rec);
    }
    return records;
}

}  // namespace fedsim
