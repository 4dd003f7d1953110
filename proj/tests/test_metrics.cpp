#include <doctest.h>

#include <cmath>
#include <fstream>

#include "fedsim/metrics.hpp"
#include "test_util.hpp"

using namespace fedsim;
using namespace fedsim::test;

namespace {

RoundRecord record_with(int round, std::optional<double> accuracy, int aggregations, int comm) {
    RoundRecord rec;
    rec.round = round;
    rec.action = round == 0 ? RoundAction::Init : RoundAction::Aggregate;
    rec.test_accuracy = accuracy;
    rec.aggregations_so_far = aggregations;
    rec.comm_rounds_so_far = comm;
    return rec;
}

}  // namespace

TEST_CASE("drift variance of identical models is zero") {
    const ModelSpec spec = make_linear_softmax(3, 2);
    Rng rng(1);
    const ParamVector m = random_params(spec, rng);
    CHECK(client_drift_variance({m, m, m}, {0.5, 0.25, 0.25}) == 0.0);
}

TEST_CASE("hand-computed two-point drift") {
    const ModelSpec spec = make_linear_softmax(1, 1);  // 2 params
    ParamVector a = zeros_like(spec);
    ParamVector b = zeros_like(spec);
    b.values[0] = 2.0;
    // mean = (1, 0); each model is distance 1 away.
    CHECK(client_drift_variance({a, b}, {0.5, 0.5}) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("drift scales quadratically") {
    const ModelSpec spec = make_linear_softmax(4, 3);
    Rng rng(2);
    std::vector<ParamVector> models;
    for (int k = 0; k < 4; ++k) models.push_back(random_params(spec, rng));
    const std::vector<double> weights = {0.1, 0.2, 0.3, 0.4};
    const double base = client_drift_variance(models, weights);
    std::vector<ParamVector> scaled;
    for (const auto& m : models) scaled.push_back(scale(m, 3.0));
    CHECK(client_drift_variance(scaled, weights) == doctest::Approx(9.0 * base).epsilon(1e-12));
}

TEST_CASE("drift matches the brute-force double loop") {
    const ModelSpec spec = make_linear_softmax(5, 4);
    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<ParamVector> models;
        std::vector<double> weights;
        double total = 0.0;
        const int K = 3 + static_cast<int>(rng.uniform_index(4));
        for (int k = 0; k < K; ++k) {
            models.push_back(random_params(spec, rng));
            weights.push_back(0.1 + rng.uniform());
            total += weights.back();
        }
        for (double& w : weights) w /= total;
        // make the weights sum to 1 exactly enough for weighted_average
        double correction = 1.0;
        for (std::size_t k = 0; k + 1 < weights.size(); ++k) correction -= weights[k];
        weights.back() = correction;

        double brute = 0.0;
        for (std::size_t k = 0; k < models.size(); ++k) {
            double dist = 0.0;
            for (std::size_t i = 0; i < models[k].values.size(); ++i) {
                double mean_i = 0.0;
                for (std::size_t j = 0; j < models.size(); ++j) {
                    mean_i += weights[j] * models[j].values[i];
                }
                const double diff = models[k].values[i] - mean_i;
                dist += diff * diff;
            }
            brute += weights[k] * dist;
        }
        CHECK(client_drift_variance(models, weights) == doctest::Approx(brute).epsilon(1e-10));
    }
}

TEST_CASE("gamma of a single client is exactly zero") {
    const BlobDataset blobs = generate_blobs(3, 4, 300, 2.0, 5);
    const std::vector<ClientDataset> clients = {make_client(0, blobs.train)};
    const ModelSpec spec = make_linear_softmax(4, 3);
    const GammaEstimate estimate = estimate_gamma(clients, {1.0}, spec, 300);
    CHECK(estimate.gamma == 0.0);
}

TEST_CASE("gamma separates IID from skewed partitions") {
    const BlobDataset blobs = generate_blobs(4, 6, 800, 1.5, 7);
    const ModelSpec spec = make_linear_softmax(6, 4);

    PartitionConfig iid;
    iid.beta = std::numeric_limits<double>::infinity();
    iid.num_clients = 5;
    iid.seed = 1;
    const auto iid_clients = dirichlet_partition(blobs.train, iid);
    const GammaEstimate gamma_iid =
        estimate_gamma(iid_clients, fedavg_weights(iid_clients), spec, 400);

    PartitionConfig skewed = iid;
    skewed.beta = 0.1;
    const auto skewed_clients = dirichlet_partition(blobs.train, skewed);
    const GammaEstimate gamma_skewed =
        estimate_gamma(skewed_clients, fedavg_weights(skewed_clients), spec, 400);

    CHECK(gamma_iid.gamma < 0.05);
    CHECK(gamma_skewed.gamma > gamma_iid.gamma);
}

TEST_CASE("gamma is stable under a doubled budget") {
    const BlobDataset blobs = generate_blobs(3, 4, 400, 1.5, 9);
    PartitionConfig cfg;
    cfg.beta = 0.5;
    cfg.num_clients = 4;
    cfg.seed = 2;
    const auto clients = dirichlet_partition(blobs.train, cfg);
    const ModelSpec spec = make_linear_softmax(4, 3);
    const auto weights = fedavg_weights(clients);
    const double g1 = estimate_gamma(clients, weights, spec, 400).gamma;
    const double g2 = estimate_gamma(clients, weights, spec, 800).gamma;
    CHECK(std::abs(g2 - g1) <= 0.1 * std::max(g1, g2) + 1e-9);
}

TEST_CASE("theorem-1 constant formula") {
    CHECK(theorem1_constant({0.0, 0.0}, {0.5, 0.5}, 0.0, 0.0, 0, 0.0, 0.0) == 0.0);
    CHECK(theorem1_constant({0.0}, {1.0}, 2.0, 1.0, 1, 1.0, 1.0) == doctest::Approx(20.0));
    // monotone in each argument
    const double base = theorem1_constant({0.5}, {1.0}, 1.0, 1.0, 2, 3.0, 0.5);
    CHECK(theorem1_constant({0.6}, {1.0}, 1.0, 1.0, 2, 3.0, 0.5) >= base);
    CHECK(theorem1_constant({0.5}, {1.0}, 1.5, 1.0, 2, 3.0, 0.5) >= base);
    CHECK(theorem1_constant({0.5}, {1.0}, 1.0, 2.0, 2, 3.0, 0.5) >= base);
    CHECK(theorem1_constant({0.5}, {1.0}, 1.0, 1.0, 3, 3.0, 0.5) >= base);
    CHECK(theorem1_constant({0.5}, {1.0}, 1.0, 1.0, 2, 4.0, 0.5) >= base);
    CHECK(theorem1_constant({0.5}, {1.0}, 1.0, 1.0, 2, 3.0, 0.6) >= base);
}

TEST_CASE("sigma proxy shrinks with batch size") {
    const BlobDataset blobs = generate_blobs(3, 5, 400, 2.0, 3);
    const ClientDataset client = make_client(0, blobs.train);
    const ModelSpec spec = make_linear_softmax(5, 3);
    const ParamVector params = init_params(spec, 3);
    Rng rng(5);
    const double small_batch = estimate_sigma_sq(spec, params, client, 4, 200, rng);
    const double big_batch = estimate_sigma_sq(spec, params, client, 64, 200, rng);
    CHECK(big_batch < small_batch);
}

TEST_CASE("efficiency summary fixtures") {
    SUBCASE("target never reached") {
        const std::vector<RoundRecord> records = {record_with(0, 0.1, 1, 1),
                                                  record_with(1, 0.2, 2, 2)};
        const EfficiencySummary s = efficiency_summary(records, 0.9, 200);
        CHECK(!s.rounds_to_target.has_value());
        CHECK(!s.speedup_vs_baseline.has_value());
    }
    SUBCASE("first evaluation reaches the target, baseline took 200") {
        const std::vector<RoundRecord> records = {record_with(0, 0.95, 1, 1),
                                                  record_with(1, 0.97, 2, 2)};
        const EfficiencySummary s = efficiency_summary(records, 0.9, 200);
        REQUIRE(s.rounds_to_target.has_value());
        CHECK(*s.rounds_to_target == 1);
        CHECK(*s.aggregations_to_target == 1);
        CHECK(*s.speedup_vs_baseline == doctest::Approx(200.0));
    }
    SUBCASE("baseline against itself is a 1.0x speedup") {
        const std::vector<RoundRecord> records = {record_with(0, 0.5, 1, 1),
                                                  record_with(1, 0.8, 2, 2),
                                                  record_with(2, 0.75, 3, 3)};
        const double best = *best_accuracy(records);
        const EfficiencySummary own = efficiency_summary(records, best);
        REQUIRE(own.rounds_to_target.has_value());
        const EfficiencySummary s = efficiency_summary(records, best, own.rounds_to_target);
        CHECK(*s.speedup_vs_baseline == doctest::Approx(1.0));
    }
}

TEST_CASE("lemma3 trivial cases") {
    const ModelSpec spec = make_linear_softmax(2, 2);
    Rng rng(7);

    SUBCASE("identical models have zero lhs") {
        RunTrace trace;
        RunTrace::Round round;
        const ParamVector m = random_params(spec, rng);
        round.models = {m, m};
        round.weights = {0.5, 0.5};
        round.steps = {4, 4};
        trace.rounds.push_back(round);
        const BoundReport report = lemma3_check(trace, {5, 10}, LocalConfig{}, 1.0);
        REQUIRE(report.per_round.size() == 1);
        CHECK(report.per_round[0].lhs == 0.0);
        CHECK(report.per_round[0].rhs > 0.0);
        CHECK(report.holds());
    }

    SUBCASE("delta 1 runs have zero lhs at every evaluation point") {
        ExperimentConfig cfg;
        BlobSpec blob;
        blob.num_classes = 3;
        blob.input_dim = 4;
        blob.n_total = 300;
        blob.class_sep = 2.0;
        blob.seed = 3;
        cfg.dataset = blob;
        cfg.partition.num_clients = 4;
        cfg.partition.seed = 3;
        cfg.local.epochs = 1;
        cfg.rounds = 6;
        cfg.sample_fraction = 1.0;
        cfg.min_samples = 1;
        cfg.strategy = {StrategyKind::FedSkip, 0.0, 1};
        const RunResult run = run_federated(cfg, {1, true});
        REQUIRE(run.trace.has_value());
        const BoundReport report =
            lemma3_check(*run.trace, {1, cfg.rounds}, cfg.local, run.max_grad_norm);
        for (const auto& entry : report.per_round) {
            CHECK(entry.lhs <= 1e-20);
        }
    }
}

TEST_CASE("summary csv renders optional cells") {
    std::vector<SummaryRow> rows(2);
    rows[0].strategy = "fedavg";
    rows[0].seed = 1;
    rows[0].final_accuracy = 0.5;
    rows[0].beta = std::numeric_limits<double>::infinity();
    rows[1].strategy = "fedskip";
    rows[1].delta = 3;
    rows[1].seed = 2;

    const auto path = std::filesystem::temp_directory_path() / "fedsim_test_summary.csv";
    write_summary_csv(path, rows);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header ==
          "strategy,delta,beta,seed,final_accuracy,rounds_to_target,aggregations_to_target,"
          "speedup,mean_drift_variance,gamma");
    std::string line1;
    std::getline(in, line1);
    CHECK(line1 == "fedavg,,inf,1,0.5,,,,,");
    std::string line2;
    std::getline(in, line2);
    CHECK(line2 == "fedskip,3,,2,,,,,,");
    std::filesystem::remove(path);
}
