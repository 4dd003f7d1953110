#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/local_training.hpp"
#include "fedsim/model.hpp"
#include "fedsim/strategies.hpp"

namespace fedsim {

// --- experiment configuration ------------------------------------------------

struct BlobSpec {
    int num_classes = 5;
    int input_dim = 20;
    int n_total = 2000;
    double class_sep = 4.0;
    std::uint64_t seed = 0;
};

struct TsvSpec {
    std::string dir;
};

// Blob and TSV datasets are partitioned with `partition`; the LEAF synthetic
// generator produces clients directly.
using DatasetSpec = std::variant<BlobSpec, SyntheticConfig, TsvSpec>;

struct ExperimentConfig {
    DatasetSpec dataset;
    PartitionConfig partition;
    StrategyConfig strategy;
    LocalConfig local;
    int rounds = 200;
    double sample_fraction = 0.2;
    int eval_every = 1;
    std::int64_t min_samples = 64;
    std::uint64_t seed = 0;
};

enum class RoundAction { Init, Aggregate, Skip };

std::string round_action_name(RoundAction action);

// Per-round metrics. Training rounds are 0..T-1; one extra record with
// round == T captures the final aggregation. wall_time_ms is diagnostic only
// and is excluded from the serialized JSONL (see write_records_jsonl).
struct RoundRecord {
    int round = 0;
    RoundAction action = RoundAction::Init;
    std::optional<double> test_accuracy;
    std::optional<double> drift_variance;
    int aggregations_so_far = 0;
    int comm_rounds_so_far = 0;
    std::int64_t wall_time_ms = 0;
};

// Optional per-round snapshots for bound checking. Models are captured at
// round start (right after distribution), so an aggregation or init round
// snapshots identical models; weights are the round's per-slot sample
// weights; steps are the local updates each slot then performed.
struct RunTrace {
    struct Round {
        std::vector<ParamVector> models;
        std::vector<double> weights;
        std::vector<std::int64_t> steps;
    };
    std::vector<Round> rounds;
};

struct RunOptions {
    int threads = 1;
    bool record_trace = false;
};

struct RunResult {
    std::vector<RoundRecord> records;
    ParamVector final_params;
    double max_grad_norm = 0.0;  // empirical G over the whole run
    std::optional<RunTrace> trace;
};

// --- dataset assembly ---------------------------------------------------------

// Generates/loads the dataset named by cfg.dataset, partitions it when it is
// not already federated, and applies the min-sample filter.
FederatedDataset build_dataset(const ExperimentConfig& cfg);

// Model spec implied by the dataset (linear-softmax over its dimensions).
ModelSpec model_spec_for(const ExperimentConfig& cfg, const FederatedDataset& data);

// --- the federated round loop ---------------------------------------------------

// Uniform sample without replacement of round(fraction*N) clients (at least
// one), returned in ascending client order.
std::vector<std::size_t> sample_clients(std::size_t num_clients, double fraction, Rng& rng);

// Runs the full federated protocol: per-round client sampling, model
// distribution (broadcast, shuffled scatter on skip rounds, or aggregate),
// parallel local training and the server step. Deterministic for a fixed
// config regardless of opts.threads.
RunResult run_federated(const ExperimentConfig& cfg, const FederatedDataset& data,
                        const RunOptions& opts = {});
RunResult run_federated(const ExperimentConfig& cfg, const RunOptions& opts = {});

// --- toy modes (Local vs Cross training) ------------------------------------

struct ToyResult {
    double local_accuracy = 0.0;  // mean per-client accuracy, isolated training
    double cross_accuracy = 0.0;  // one model routed round-robin across clients
};

// Isolated per-client training: each client trains its own model from the
// shared initializer for cfg.local.epochs epochs; returns the unweighted mean
// of their test accuracies on the shared test set.
double run_local_mode(const ExperimentConfig& cfg, const FederatedDataset& data,
                      const RunOptions& opts = {});

// A single model visits clients round-robin (one epoch per stop, fixed client
// order) for the same total epoch budget; returns its test accuracy.
double run_cross_mode(const ExperimentConfig& cfg, const FederatedDataset& data);

ToyResult run_toy(const ExperimentConfig& cfg, const RunOptions& opts = {});

// --- record serialization ------------------------------------------------------

// One JSON object per record with snake_case keys. Optional metrics are null
// when absent. wall_time_ms is omitted: the stream is a determinism contract
// (identical config => byte-identical file) and wall time is not.
std::string record_to_json(const RoundRecord& record);
void write_records_jsonl(const std::filesystem::path& path,
                         const std::vector<RoundRecord>& records);
std::vector<RoundRecord> read_records_jsonl(const std::filesystem::path& path);

}  // namespace fedsim
