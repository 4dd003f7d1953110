#include "fedsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace fedsim {

namespace {

// Weighted multi-client objective: F(w) = sum_k weight_k * loss_k(w).
struct WeightedObjective {
    const ModelSpec& spec;
    std::vector<const std::vector<Example>*> datasets;
    std::vector<double> weights;

    double loss_and_grad(const ParamVector& params, ParamVector& grad_out) const {
        grad_out = zeros_like(spec);
        ParamVector part = zeros_like(spec);
        double total = 0.0;
        for (std::size_t k = 0; k < datasets.size(); ++k) {
            total += weights[k] * loss_and_gradient(spec, params, *datasets[k], part);
            axpy_in_place(grad_out, weights[k], part);
        }
        return total;
    }

    double loss_only(const ParamVector& params) const {
        double total = 0.0;
        for (std::size_t k = 0; k < datasets.size(); ++k) {
            total += weights[k] * loss(spec, params, *datasets[k]);
        }
        return total;
    }
};

struct MinimizeResult {
    double min_loss = 0.0;
    bool converged = false;
};

// Full-batch gradient descent with Armijo backtracking; stops when the
// gradient norm drops below grad_tol or the iteration budget runs out.
MinimizeResult minimize(const WeightedObjective& objective, const ModelSpec& spec, int budget,
                        double grad_tol = 1e-4) {
    ParamVector w = init_params(spec, 0);
    ParamVector grad = zeros_like(spec);
    double step = 1.0;
    double current = objective.loss_and_grad(w, grad);

    for (int iter = 0; iter < budget; ++iter) {
        const double grad_sq = squared_norm(grad);
        if (std::sqrt(grad_sq) < grad_tol) {
            return {current, true};
        }
        bool accepted = false;
        for (int halvings = 0; halvings < 60; ++halvings) {
            ParamVector candidate = w;
            axpy_in_place(candidate, -step, grad);
            const double candidate_loss = objective.loss_only(candidate);
            if (candidate_loss <= current - 1e-4 * step * grad_sq) {
                w = std::move(candidate);
                current = candidate_loss;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            // Step size underflowed; the iterate is numerically stationary.
            return {current, std::sqrt(squared_norm(grad)) < grad_tol};
        }
        current = objective.loss_and_grad(w, grad);
    }
    return {current, std::sqrt(squared_norm(grad)) < grad_tol};
}

void append_csv_cell(std::string& line, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    line += buf;
}

}  // namespace

double client_drift_variance(const std::vector<ParamVector>& models,
                             const std::vector<double>& weights) {
    const ParamVector mean = weighted_average(models, weights);
    double variance = 0.0;
    for (std::size_t k = 0; k < models.size(); ++k) {
        variance += weights[k] * squared_distance(models[k], mean);
    }
    return variance;
}

GammaEstimate estimate_gamma(const std::vector<ClientDataset>& clients,
                             const std::vector<double>& weights, const ModelSpec& spec,
                             int budget) {
    if (clients.empty() || clients.size() != weights.size()) {
        throw std::invalid_argument("estimate_gamma: need one weight per client");
    }
    if (spec.family != ModelFamily::LinearSoftmax) {
        throw std::invalid_argument("estimate_gamma: only supported for linear-softmax specs");
    }

    GammaEstimate estimate;

    // Global objective: the weighted sum over clients, whose minimum is F*.
    WeightedObjective global{spec, {}, {}};
    for (std::size_t k = 0; k < clients.size(); ++k) {
        global.datasets.push_back(&clients[k].train);
        global.weights.push_back(weights[k]);
    }
    const MinimizeResult global_fit = minimize(global, spec, budget);
    estimate.f_star = global_fit.min_loss;
    estimate.converged = global_fit.converged;

    for (std::size_t k = 0; k < clients.size(); ++k) {
        WeightedObjective local{spec, {&clients[k].train}, {1.0}};
        const MinimizeResult fit = minimize(local, spec, budget);
        estimate.weighted_client_min += weights[k] * fit.min_loss;
        estimate.converged = estimate.converged && fit.converged;
    }

    const double raw = estimate.f_star - estimate.weighted_client_min;
    estimate.clamped = raw < 0.0;
    estimate.gamma = std::max(0.0, raw);
    return estimate;
}

bool BoundReport::holds() const {
    return std::all_of(per_round.begin(), per_round.end(),
                       [](const Entry& e) { return e.margin >= 0.0; });
}

BoundReport lemma3_check(const RunTrace& trace, const SkipSchedule& schedule,
                         const LocalConfig& local, double g_estimate) {
    BoundReport report;
    report.estimated_g = g_estimate;
    report.eta = local.lr;
    report.delta = schedule.delta;
    for (const auto& round : trace.rounds) {
        for (std::int64_t s : round.steps) report.local_steps = std::max(report.local_steps, s);
    }

    const double e_steps = static_cast<double>(report.local_steps);
    const double rhs = 4.0 * static_cast<double>(schedule.delta) * local.lr * local.lr * e_steps *
                       e_steps * g_estimate * g_estimate;
    for (std::size_t t = 0; t < trace.rounds.size(); ++t) {
        const auto& round = trace.rounds[t];
        BoundReport::Entry entry;
        entry.round = static_cast<int>(t);
        entry.lhs = client_drift_variance(round.models, round.weights);
        entry.rhs = rhs;
        entry.margin = entry.rhs - entry.lhs;
        report.per_round.push_back(entry);
    }
    return report;
}

double theorem1_constant(const std::vector<double>& sigma_ks, const std::vector<double>& weights,
                         double smoothness, double gamma, int delta, double local_steps, double g) {
    if (sigma_ks.size() != weights.size()) {
        throw std::invalid_argument("theorem1_constant: need one weight per sigma");
    }
    double variance_term = 0.0;
    for (std::size_t k = 0; k < sigma_ks.size(); ++k) {
        variance_term += weights[k] * weights[k] * sigma_ks[k] * sigma_ks[k];
    }
    return variance_term + 6.0 * smoothness * gamma +
           8.0 * static_cast<double>(delta) * local_steps * local_steps * g * g;
}

double estimate_sigma_sq(const ModelSpec& spec, const ParamVector& params,
                         const ClientDataset& client, int batch_size, int n_draws, Rng& rng) {
    if (n_draws < 1) throw std::invalid_argument("estimate_sigma_sq: n_draws must be >= 1");
    const ParamVector full_grad = gradient(spec, params, client.train);
    ParamVector batch_grad = zeros_like(spec);
    double total = 0.0;
    for (int draw = 0; draw < n_draws; ++draw) {
        std::vector<Example> batch;
        batch.reserve(batch_size);
        for (int i = 0; i < batch_size; ++i) {
            batch.push_back(client.train[rng.uniform_index(client.train.size())]);
        }
        loss_and_gradient(spec, params, batch, batch_grad);
        total += squared_distance(batch_grad, full_grad);
    }
    return total / static_cast<double>(n_draws);
}

EfficiencySummary efficiency_summary(const std::vector<RoundRecord>& records,
                                     double target_accuracy,
                                     std::optional<int> baseline_rounds) {
    EfficiencySummary summary;
    summary.target_accuracy = target_accuracy;
    for (const RoundRecord& rec : records) {
        if (rec.test_accuracy && *rec.test_accuracy >= target_accuracy) {
            summary.rounds_to_target = rec.comm_rounds_so_far;
            summary.aggregations_to_target = rec.aggregations_so_far;
            break;
        }
    }
    if (summary.rounds_to_target && baseline_rounds && *summary.rounds_to_target > 0) {
        summary.speedup_vs_baseline =
            static_cast<double>(*baseline_rounds) / static_cast<double>(*summary.rounds_to_target);
    }
    return summary;
}

std::optional<double> best_accuracy(const std::vector<RoundRecord>& records) {
    std::optional<double> best;
    for (const RoundRecord& rec : records) {
        if (rec.test_accuracy && (!best || *rec.test_accuracy > *best)) {
            best = *rec.test_accuracy;
        }
    }
    return best;
}

std::optional<double> mean_drift_variance(const std::vector<RoundRecord>& records) {
    double total = 0.0;
    std::size_t count = 0;
    for (const RoundRecord& rec : records) {
        if (rec.drift_variance) {
            total += *rec.drift_variance;
            ++count;
        }
    }
    if (count == 0) return std::nullopt;
    return total / static_cast<double>(count);
}

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
        out << "strategy,delta,beta,seed,final_accuracy,rounds_to_target,aggregations_to_target,"
               "speedup,mean_drift_variance,gamma\n";
        for (const SummaryRow& row : rows) {
            std::string line = row.strategy;
            line += ',';
            if (row.delta) line += std::to_string(*row.delta);
            line += ',';
            if (row.beta) {
                if (std::isinf(*row.beta)) {
                    line += "inf";
                } else {
                    append_csv_cell(line, *row.beta);
                }
            }
            line += ',';
            line += std::to_string(row.seed);
            line += ',';
            if (row.final_accuracy) append_csv_cell(line, *row.final_accuracy);
            line += ',';
            if (row.rounds_to_target) line += std::to_string(*row.rounds_to_target);
            line += ',';
            if (row.aggregations_to_target) line += std::to_string(*row.aggregations_to_target);
            line += ',';
            if (row.speedup) append_csv_cell(line, *row.speedup);
            line += ',';
            if (row.mean_drift_variance) append_csv_cell(line, *row.mean_drift_variance);
            line += ',';
            if (row.gamma) append_csv_cell(line, *row.gamma);
            line += '\n';
            out << line;
        }
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace fedsim
