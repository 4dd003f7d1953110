#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/local_training.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

enum class StrategyKind { FedAvg, FedProx, Scaffold, FedNova, FedSkip };

struct StrategyConfig {
    StrategyKind kind = StrategyKind::FedAvg;
    double mu = 0.0;  // FedProx proximal weight
    int delta = 1;    // FedSkip skip period
};

std::string strategy_name(StrategyKind kind);
StrategyKind strategy_from_name(const std::string& name);

// Skip-aggregation schedule: rounds 2..T-1 that are not multiples of delta
// skip the server average.
struct SkipSchedule {
    int delta = 1;
    int total_rounds = 0;
};

// True iff round t skips aggregation: t > 1, t < total_rounds and
// t mod delta != 0.
bool is_skip_round(int t, const SkipSchedule& schedule);

// Number of non-skip rounds in 0..total_rounds-1.
int count_aggregation_rounds(const SkipSchedule& schedule);

// Tracks, per model slot, the sample counts consumed in every round since
// the last aggregation (inclusive). Slots follow models: when models are
// shuffled the ledger rows are permuted alongside.
class SampleLedger {
public:
    explicit SampleLedger(std::size_t num_slots) : counts_(num_slots) {}

    std::size_t num_slots() const { return counts_.size(); }
    std::size_t rounds_in_period() const { return counts_.empty() ? 0 : counts_[0].size(); }

    // Clears all rows; called right after an aggregation.
    void begin_period();

    // Appends one round of per-slot counts. All counts must be positive.
    void record_round(const std::vector<std::int64_t>& per_slot_counts);

    // Reorders rows so row k tracks the model that moved into slot k:
    // new_row[k] = old_row[perm[k]].
    void apply_permutation(const std::vector<std::size_t>& perm);

    // Per-slot total over the current period.
    std::vector<std::int64_t> period_totals() const;

private:
    std::vector<std::vector<std::int64_t>> counts_;
};

// --- server-side operations -------------------------------------------------

// Coordinate-wise sum of weights[k] * models[k] in fixed slot order. Weights
// must be non-negative and sum to 1 within 1e-9.
ParamVector weighted_average(const std::vector<ParamVector>& models,
                             const std::vector<double>& weights);

// p_k = N_k / sum(N).
std::vector<double> fedavg_weights(const std::vector<ClientDataset>& clients);

// Cumulative per-slot weights over the ledger's current period.
std::vector<double> cumulative_weights(const SampleLedger& ledger);

// Uniformly random permutation of the models (Fisher-Yates). Returns the
// permutation applied, so the caller can permute slot-aligned state (the
// sample ledger) the same way.
std::vector<ParamVector> shuffle_scatter(const std::vector<ParamVector>& models, Rng& rng,
                                         std::vector<std::size_t>* permutation_out = nullptr);

// Normalized aggregation: d_k = (global - params_k)/steps_k,
// tau_eff = sum p_k steps_k, result = global - tau_eff * sum p_k d_k.
ParamVector fednova_aggregate(const ParamVector& global, const std::vector<LocalResult>& results,
                              const std::vector<double>& weights);

// c_global + participation_fraction * mean(control_deltas).
ParamVector scaffold_server_update(const ParamVector& c_global,
                                   const std::vector<ParamVector>& control_deltas,
                                   double participation_fraction);

}  // namespace fedsim
