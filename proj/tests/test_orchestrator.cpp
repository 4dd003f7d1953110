#include <doctest.h>

#include <cmath>

#include "fedsim/metrics.hpp"
#include "fedsim/orchestrator.hpp"
#include "test_util.hpp"

using namespace fedsim;
using namespace fedsim::test;

namespace {

// Small blob experiment that runs in well under a second.
ExperimentConfig small_blob_config() {
    ExperimentConfig cfg;
    BlobSpec blob;
    blob.num_classes = 3;
    blob.input_dim = 5;
    blob.n_total = 400;
    blob.class_sep = 3.0;
    blob.seed = 11;
    cfg.dataset = blob;
    cfg.partition.beta = 0.5;
    cfg.partition.num_clients = 5;
    cfg.partition.seed = 11;
    cfg.local.epochs = 1;
    cfg.local.batch_size = 16;
    cfg.rounds = 8;
    cfg.sample_fraction = 1.0;
    cfg.eval_every = 1;
    cfg.min_samples = 1;
    cfg.seed = 21;
    return cfg;
}

std::string records_as_text(const std::vector<RoundRecord>& records) {
    std::string out;
    for (const RoundRecord& r : records) {
        out += record_to_json(r);
        out += '\n';
    }
    return out;
}

}  // namespace

TEST_CASE("fedskip with delta 1 is bit-identical to fedavg") {
    for (std::uint64_t seed : {1ULL, 2ULL}) {
        ExperimentConfig cfg = small_blob_config();
        cfg.seed = seed;

        cfg.strategy = {StrategyKind::FedAvg, 0.0, 1};
        const RunResult avg = run_federated(cfg);

        cfg.strategy = {StrategyKind::FedSkip, 0.0, 1};
        const RunResult skip = run_federated(cfg);

        CHECK(records_as_text(avg.records) == records_as_text(skip.records));
        CHECK(avg.final_params.values == skip.final_params.values);
    }
}

TEST_CASE("a single client reduces to chained local training") {
    ExperimentConfig cfg = small_blob_config();
    cfg.partition.num_clients = 1;
    cfg.strategy = {StrategyKind::FedAvg, 0.0, 1};
    const FederatedDataset data = build_dataset(cfg);
    REQUIRE(data.clients.size() == 1);

    const RunResult run = run_federated(cfg, data);

    const ModelSpec spec = model_spec_for(cfg, data);
    ParamVector chained = init_params(spec, cfg.seed);
    for (int t = 0; t < cfg.rounds; ++t) {
        LocalConfig local = cfg.local;
        local.seed = stream_seed(cfg.seed, stream_tag::kLocalTraining,
                                 static_cast<std::uint64_t>(t),
                                 static_cast<std::uint64_t>(data.clients[0].client_id));
        chained = train_local(chained, data.clients[0], local).params;
    }
    CHECK(run.final_params.values == chained.values);
}

TEST_CASE("fedskip aggregation count equals the schedule enumeration") {
    for (int delta : {3, 5}) {
        ExperimentConfig cfg = small_blob_config();
        cfg.rounds = 20;
        cfg.strategy = {StrategyKind::FedSkip, 0.0, delta};
        const RunResult run = run_federated(cfg);
        const int expected = count_aggregation_rounds(SkipSchedule{delta, cfg.rounds});
        CHECK(run.records.back().aggregations_so_far == expected);
    }
}

TEST_CASE("sample_clients honors fraction and determinism") {
    SUBCASE("fraction 1.0 keeps original order") {
        Rng rng(1);
        const auto all = sample_clients(7, 1.0, rng);
        CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
    }
    SUBCASE("20% of 100 clients is exactly 20 distinct clients") {
        Rng rng(2);
        const auto sampled = sample_clients(100, 0.2, rng);
        REQUIRE(sampled.size() == 20);
        for (std::size_t i = 1; i < sampled.size(); ++i) CHECK(sampled[i - 1] < sampled[i]);
    }
    SUBCASE("same rng state gives the same sample") {
        Rng a(3);
        Rng b(3);
        CHECK(sample_clients(50, 0.3, a) == sample_clients(50, 0.3, b));
    }
    SUBCASE("at least one client is sampled") {
        Rng rng(4);
        CHECK(sample_clients(10, 0.01, rng).size() == 1);
    }
}

TEST_CASE("records are consistent with the schedule") {
    ExperimentConfig cfg = small_blob_config();
    cfg.rounds = 12;
    cfg.strategy = {StrategyKind::FedSkip, 0.0, 3};
    const RunResult run = run_federated(cfg);
    const SkipSchedule schedule{3, cfg.rounds};

    REQUIRE(run.records.size() == static_cast<std::size_t>(cfg.rounds) + 1);
    int aggregations = 0;
    for (int t = 0; t < cfg.rounds; ++t) {
        const RoundRecord& rec = run.records[t];
        CHECK(rec.round == t);
        CHECK(rec.comm_rounds_so_far == t + 1);
        if (t == 0) {
            CHECK(rec.action == RoundAction::Init);
        } else if (is_skip_round(t, schedule)) {
            CHECK(rec.action == RoundAction::Skip);
        } else {
            CHECK(rec.action == RoundAction::Aggregate);
        }
        if (rec.action == RoundAction::Aggregate) ++aggregations;
        CHECK(rec.aggregations_so_far == aggregations);
    }
    const RoundRecord& final_rec = run.records.back();
    CHECK(final_rec.round == cfg.rounds);
    CHECK(final_rec.action == RoundAction::Aggregate);
    CHECK(final_rec.aggregations_so_far == aggregations + 1);
    CHECK(final_rec.test_accuracy.has_value());
}

TEST_CASE("skip rounds conserve models end to end") {
    // With zero local epochs every model stays w0 through shuffles and
    // averages alike; any loss or duplication in the scatter would show up.
    ExperimentConfig cfg = small_blob_config();
    cfg.local.epochs = 0;
    cfg.rounds = 10;
    cfg.strategy = {StrategyKind::FedSkip, 0.0, 3};
    const FederatedDataset data = build_dataset(cfg);
    const RunResult run = run_federated(cfg, data);
    const ParamVector w0 = init_params(model_spec_for(cfg, data), cfg.seed);
    CHECK(run.final_params.values == w0.values);
    for (const RoundRecord& rec : run.records) {
        CHECK(*rec.drift_variance == 0.0);
    }
}

TEST_CASE("thread count does not change results") {
    ExperimentConfig cfg = small_blob_config();
    cfg.strategy = {StrategyKind::FedSkip, 0.0, 3};
    const FederatedDataset data = build_dataset(cfg);
    const RunResult one = run_federated(cfg, data, {1, false});
    const RunResult four = run_federated(cfg, data, {4, false});
    CHECK(records_as_text(one.records) == records_as_text(four.records));
    CHECK(one.final_params.values == four.final_params.values);
}

TEST_CASE("partial participation samples the configured count") {
    ExperimentConfig cfg = small_blob_config();
    cfg.partition.num_clients = 10;
    cfg.sample_fraction = 0.2;
    cfg.strategy = {StrategyKind::FedSkip, 0.0, 3};
    const RunResult run = run_federated(cfg);
    CHECK(run.records.size() == static_cast<std::size_t>(cfg.rounds) + 1);
}

TEST_CASE("every strategy runs and records") {
    for (StrategyKind kind : {StrategyKind::FedAvg, StrategyKind::FedProx, StrategyKind::Scaffold,
                              StrategyKind::FedNova, StrategyKind::FedSkip}) {
        ExperimentConfig cfg = small_blob_config();
        cfg.strategy.kind = kind;
        cfg.strategy.mu = kind == StrategyKind::FedProx ? 0.01 : 0.0;
        cfg.strategy.delta = kind == StrategyKind::FedSkip ? 3 : 1;
        const RunResult run = run_federated(cfg);
        CHECK(run.records.back().test_accuracy.has_value());
        CHECK(std::isfinite(run.final_params.values[0]));
    }
}

TEST_CASE("divergence is reported with round and client context") {
    ExperimentConfig cfg = small_blob_config();
    cfg.local.lr = 1e308;
    cfg.local.momentum = 0.0;
    try {
        run_federated(cfg);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        const std::string message = e.what();
        CHECK(message.find("round 0") != std::string::npos);
        CHECK(message.find("client") != std::string::npos);
    }
}

TEST_CASE("toy modes collapse for a single client") {
    ExperimentConfig cfg = small_blob_config();
    cfg.partition.num_clients = 1;
    cfg.local.epochs = 4;
    const FederatedDataset data = build_dataset(cfg);
    const double local = run_local_mode(cfg, data);
    const double cross = run_cross_mode(cfg, data);
    CHECK(local == cross);
}

TEST_CASE("zero epoch budget returns the initializer's accuracy") {
    ExperimentConfig cfg = small_blob_config();
    cfg.local.epochs = 0;
    const FederatedDataset data = build_dataset(cfg);
    const double cross = run_cross_mode(cfg, data);
    const ModelSpec spec = model_spec_for(cfg, data);
    CHECK(cross == evaluate_accuracy(spec, init_params(spec, cfg.seed), data.test));
}

TEST_CASE("jsonl round-trips records") {
    ExperimentConfig cfg = small_blob_config();
    cfg.rounds = 4;
    cfg.eval_every = 2;
    const RunResult run = run_federated(cfg);
    const auto path = std::filesystem::temp_directory_path() / "fedsim_test_records.jsonl";
    write_records_jsonl(path, run.records);
    const auto back = read_records_jsonl(path);
    CHECK(records_as_text(back) == records_as_text(run.records));
    std::filesystem::remove(path);
}
