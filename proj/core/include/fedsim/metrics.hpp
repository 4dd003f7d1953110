#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"
#include "fedsim/orchestrator.hpp"
#include "fedsim/strategies.hpp"

namespace fedsim {

// Weighted spread of client models around their weighted mean:
// sum_k p_k * ||w_k - w_bar||^2.
double client_drift_variance(const std::vector<ParamVector>& models,
                             const std::vector<double>& weights);

// --- non-IID degree ---------------------------------------------------------

struct GammaEstimate {
    double gamma = 0.0;            // max(0, f_star - weighted_client_min)
    double f_star = 0.0;           // estimated minimum of the weighted global objective
    double weighted_client_min = 0.0;  // sum_k p_k * estimated min of F_k
    bool clamped = false;          // raw estimate was negative
    bool converged = true;         // every optimization hit grad-norm < 1e-4 within budget
};

// Estimates Gamma = F* - sum_k p_k F_k* by full-batch gradient descent with
// backtracking, budget = outer iterations per optimization. Only trustworthy
// for convex (linear-softmax) specs.
GammaEstimate estimate_gamma(const std::vector<ClientDataset>& clients,
                             const std::vector<double>& weights, const ModelSpec& spec,
                             int budget = 2000);

// --- divergence bound ---------------------------------------------------------

struct BoundReport {
    struct Entry {
        int round = 0;
        double lhs = 0.0;     // measured drift variance
        double rhs = 0.0;     // 4 * delta * eta^2 * E^2 * G^2
        double margin = 0.0;  // rhs - lhs
    };
    std::vector<Entry> per_round;
    double estimated_g = 0.0;
    double eta = 0.0;
    std::int64_t local_steps = 0;  // E: max local updates per round per client
    int delta = 1;

    bool holds() const;
};

// Checks the per-round divergence bound on a recorded trajectory. g_estimate
// is the empirical max stochastic-gradient norm from the run.
BoundReport lemma3_check(const RunTrace& trace, const SkipSchedule& schedule,
                         const LocalConfig& local, double g_estimate);

// sum_k p_k^2 sigma_k^2 + 6 L Gamma + 8 Delta E^2 G^2.
double theorem1_constant(const std::vector<double>& sigma_ks, const std::vector<double>& weights,
                         double smoothness, double gamma, int delta, double local_steps, double g);

// Empirical variance proxy for sigma_k^2: mean squared distance between
// minibatch gradients and the full-client gradient at the given iterate.
double estimate_sigma_sq(const ModelSpec& spec, const ParamVector& params,
                         const ClientDataset& client, int batch_size, int n_draws, Rng& rng);

// --- Table-IV style efficiency accounting --------------------------------------

struct EfficiencySummary {
    double target_accuracy = 0.0;
    std::optional<int> rounds_to_target;
    std::optional<int> aggregations_to_target;
    std::optional<double> speedup_vs_baseline;
};

// First record whose test_accuracy reaches the target; speedup is
// baseline_rounds / rounds_to_target when both sides are defined.
EfficiencySummary efficiency_summary(const std::vector<RoundRecord>& records,
                                     double target_accuracy,
                                     std::optional<int> baseline_rounds = std::nullopt);

// Highest evaluated test accuracy in the records.
std::optional<double> best_accuracy(const std::vector<RoundRecord>& records);

// Mean drift variance over the records that carry one.
std::optional<double> mean_drift_variance(const std::vector<RoundRecord>& records);

// --- CSV summaries ------------------------------------------------------------

struct SummaryRow {
    std::string strategy;
    std::optional<int> delta;
    std::optional<double> beta;  // +infinity encodes IID; absent when not partitioned
    std::uint64_t seed = 0;
    std::optional<double> final_accuracy;  // absent when the cell diverged
    std::optional<int> rounds_to_target;
    std::optional<int> aggregations_to_target;
    std::optional<double> speedup;
    std::optional<double> mean_drift_variance;
    std::optional<double> gamma;
};

// One row per (strategy, delta, beta, seed); empty cells for absent values.
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);

}  // namespace fedsim
