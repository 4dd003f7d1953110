#include "fedsim/strategies.hpp"

#include <cmath>
#include <stdexcept>

namespace fedsim {

std::string strategy_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::FedAvg: return "fedavg";
        case StrategyKind::FedProx: return "fedprox";
        case StrategyKind::Scaffold: return "scaffold";
        case StrategyKind::FedNova: return "fednova";
        case StrategyKind::FedSkip: return "fedskip";
    }
    throw std::logic_error("unknown strategy kind");
}

StrategyKind strategy_from_name(const std::string& name) {
    if (name == "fedavg") return StrategyKind::FedAvg;
    if (name == "fedprox") return StrategyKind::FedProx;
    if (name == "scaffold") return StrategyKind::Scaffold;
    if (name == "fednova") return StrategyKind::FedNova;
    if (name == "fedskip") return StrategyKind::FedSkip;
    throw std::invalid_argument("unknown strategy: " + name);
}

bool is_skip_round(int t, const SkipSchedule& schedule) {
    if (schedule.delta < 1) throw std::invalid_argument("is_skip_round: delta must be >= 1");
    if (t < 0 || t >= schedule.total_rounds) {
        throw std::invalid_argument("is_skip_round: round out of range");
    }
    return t > 1 && t < schedule.total_rounds && t % schedule.delta != 0;
}

int count_aggregation_rounds(const SkipSchedule& schedule) {
    int count = 0;
    for (int t = 0; t < schedule.total_rounds; ++t) {
        if (!is_skip_round(t, schedule)) ++count;
    }
    return count;
}

void SampleLedger::begin_period() {
    for (auto& row : counts_) row.clear();
}

void SampleLedger::record_round(const std::vector<std::int64_t>& per_slot_counts) {
    if (per_slot_counts.size() != counts_.size()) {
        throw std::invalid_argument("SampleLedger: count vector does not match slot count");
    }
    for (std::size_t k = 0; k < counts_.size(); ++k) {
        if (per_slot_counts[k] <= 0) {
            throw std::invalid_argument("SampleLedger: sample counts must be positive");
        }
        counts_[k].push_back(per_slot_counts[k]);
    }
}

void SampleLedger::apply_permutation(const std::vector<std::size_t>& perm) {
    if (perm.size() != counts_.size()) {
        throw std::invalid_argument("SampleLedger: permutation size mismatch");
    }
    std::vector<std::vector<std::int64_t>> next(counts_.size());
    for (std::size_t k = 0; k < perm.size(); ++k) next[k] = counts_[perm[k]];
    counts_ = std::move(next);
}

std::vector<std::int64_t> SampleLedger::period_totals() const {
    std::vector<std::int64_t> totals(counts_.size(), 0);
    for (std::size_t k = 0; k < counts_.size(); ++k) {
        for (std::int64_t c : counts_[k]) totals[k] += c;
    }
    return totals;
}

ParamVector weighted_average(const std::vector<ParamVector>& models,
                             const std::vector<double>& weights) {
    if (models.empty()) throw std::invalid_argument("weighted_average: no models");
    if (models.size() != weights.size()) {
        throw std::invalid_argument("weighted_average: need one weight per model");
    }
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw std::invalid_argument("weighted_average: negative weight");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
        throw std::invalid_argument("weighted_average: weights must sum to 1");
    }
    return weighted_sum(models, weights);
}

std::vector<double> fedavg_weights(const std::vector<ClientDataset>& clients) {
    if (clients.empty()) throw std::invalid_argument("fedavg_weights: no clients");
    std::int64_t total = 0;
    for (const ClientDataset& c : clients) {
        if (c.n_samples <= 0) throw std::invalid_argument("fedavg_weights: N_k must be positive");
        total += c.n_samples;
    }
    std::vector<double> weights(clients.size());
    for (std::size_t k = 0; k < clients.size(); ++k) {
        weights[k] = static_cast<double>(clients[k].n_samples) / static_cast<double>(total);
    }
    return weights;
}

std::vector<double> cumulative_weights(const SampleLedger& ledger) {
    if (ledger.num_slots() == 0 || ledger.rounds_in_period() == 0) {
        throw std::invalid_argument("cumulative_weights: ledger is empty");
    }
    const std::vector<std::int64_t> totals = ledger.period_totals();
    std::int64_t grand = 0;
    for (std::int64_t t : totals) grand += t;
    std::vector<double> weights(totals.size());
    for (std::size_t k = 0; k < totals.size(); ++k) {
        weights[k] = static_cast<double>(totals[k]) / static_cast<double>(grand);
    }
    return weights;
}

std::vector<ParamVector> shuffle_scatter(const std::vector<ParamVector>& models, Rng& rng,
                                         std::vector<std::size_t>* permutation_out) {
    if (models.empty()) throw std::invalid_argument("shuffle_scatter: no models");
    std::vector<std::size_t> perm = rng.permutation(models.size());
    std::vector<ParamVector> shuffled;
    shuffled.reserve(models.size());
    for (std::size_t k = 0; k < perm.size(); ++k) shuffled.push_back(models[perm[k]]);
    if (permutation_out != nullptr) *permutation_out = std::move(perm);
    return shuffled;
}

ParamVector fednova_aggregate(const ParamVector& global, const std::vector<LocalResult>& results,
                              const std::vector<double>& weights) {
    if (results.empty() || results.size() != weights.size()) {
        throw std::invalid_argument("fednova_aggregate: need one weight per result");
    }
    double tau_eff = 0.0;
    for (std::size_t k = 0; k < results.size(); ++k) {
        if (results[k].steps_taken <= 0) {
            throw std::invalid_argument("fednova_aggregate: steps_taken must be positive");
        }
        tau_eff += weights[k] * static_cast<double>(results[k].steps_taken);
    }
    // Normalized direction sum p_k * (global - params_k)/steps_k, fixed order.
    ParamVector direction = zeros_like(global.layout);
    for (std::size_t k = 0; k < results.size(); ++k) {
        check_same_layout(global, results[k].params);
        const double coeff = weights[k] / static_cast<double>(results[k].steps_taken);
        for (std::size_t i = 0; i < direction.values.size(); ++i) {
            direction.values[i] += coeff * (global.values[i] - results[k].params.values[i]);
        }
    }
    ParamVector out = global;
    axpy_in_place(out, -tau_eff, direction);
    return out;
}

ParamVector scaffold_server_update(const ParamVector& c_global,
                                   const std::vector<ParamVector>& control_deltas,
                                   double participation_fraction) {
    if (control_deltas.empty()) return c_global;
    ParamVector mean = zeros_like(c_global.layout);
    for (const ParamVector& d : control_deltas) {
        check_same_layout(c_global, d);
        for (std::size_t i = 0; i < mean.values.size(); ++i) mean.values[i] += d.values[i];
    }
    const double inv = 1.0 / static_cast<double>(control_deltas.size());
    ParamVector out = c_global;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] += participation_fraction * mean.values[i] * inv;
    }
    return out;
}

}  // namespace fedsim
