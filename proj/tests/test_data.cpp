#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "fedsim/data.hpp"
#include "fedsim/local_training.hpp"
#include "test_util.hpp"

using namespace fedsim;
using namespace fedsim::test;

namespace {

// Centralized SGD fit over a pooled example set, for oracle-style checks.
ParamVector central_fit(const ModelSpec& spec, const std::vector<Example>& examples, int epochs,
                        double lr) {
    LocalConfig cfg;
    cfg.epochs = epochs;
    cfg.lr = lr;
    cfg.batch_size = 64;
    cfg.momentum = 0.9;
    cfg.weight_decay = 0.0;
    cfg.seed = 12345;
    return train_local(init_params(spec, 7), make_client(0, examples), cfg).params;
}

double label_entropy(const ClientDataset& client, int num_classes) {
    std::vector<double> counts(num_classes, 0.0);
    for (const Example& ex : client.train) counts[ex.label] += 1.0;
    double entropy = 0.0;
    for (double c : counts) {
        if (c > 0.0) {
            const double p = c / static_cast<double>(client.train.size());
            entropy -= p * std::log(p);
        }
    }
    return entropy;
}

double mean_client_entropy(const std::vector<ClientDataset>& clients, int num_classes) {
    double total = 0.0;
    for (const ClientDataset& c : clients) total += label_entropy(c, num_classes);
    return total / static_cast<double>(clients.size());
}

std::multiset<std::pair<std::vector<double>, int>> example_multiset(
    const std::vector<Example>& examples) {
    std::multiset<std::pair<std::vector<double>, int>> out;
    for (const Example& ex : examples) out.emplace(ex.features, ex.label);
    return out;
}

}  // namespace

TEST_CASE("well-separated blobs are learnable to high accuracy") {
    const BlobDataset blobs = generate_blobs(5, 20, 1500, 20.0, 3);
    const ModelSpec spec = make_linear_softmax(20, 5);
    const ParamVector fit = central_fit(spec, blobs.train, 20, 0.05);
    CHECK(evaluate_accuracy(spec, fit, blobs.test) > 0.95);
}

TEST_CASE("zero separation blobs are indistinguishable") {
    const BlobDataset blobs = generate_blobs(5, 10, 2000, 0.0, 3);
    const ModelSpec spec = make_linear_softmax(10, 5);
    const ParamVector fit = central_fit(spec, blobs.train, 10, 0.05);
    CHECK(std::abs(evaluate_accuracy(spec, fit, blobs.test) - 0.2) < 0.08);
}

TEST_CASE("blob generation is deterministic and splits 80/20") {
    const BlobDataset a = generate_blobs(3, 5, 500, 2.0, 11);
    const BlobDataset b = generate_blobs(3, 5, 500, 2.0, 11);
    REQUIRE(a.train.size() == b.train.size());
    CHECK(a.train.size() == 400);
    CHECK(a.test.size() == 100);
    for (std::size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].features == b.train[i].features);
        CHECK(a.train[i].label == b.train[i].label);
    }
    CHECK_THROWS_AS(generate_blobs(5, 10, 40, 1.0, 0), std::invalid_argument);
}

TEST_CASE("iid synthetic clients share one labeling function") {
    SyntheticConfig cfg;
    cfg.num_clients = 12;
    cfg.alpha = 0.0;
    cfg.beta_gen = 0.0;
    cfg.iid_model = true;
    cfg.seed = 5;
    const FederatedDataset data = generate_synthetic_leaf(cfg);

    std::vector<Example> pooled;
    for (const ClientDataset& c : data.clients) {
        pooled.insert(pooled.end(), c.train.begin(), c.train.end());
    }
    const ModelSpec spec = make_linear_softmax(cfg.num_features, cfg.num_classes);
    const ParamVector fit = central_fit(spec, pooled, 30, 0.05);

    double lo = 1.0;
    double hi = 0.0;
    for (const ClientDataset& c : data.clients) {
        const double acc = evaluate_accuracy(spec, fit, c.train);
        lo = std::min(lo, acc);
        hi = std::max(hi, acc);
    }
    CHECK(hi - lo < 0.05);
}

TEST_CASE("default synthetic config yields 212 filterable clients") {
    SyntheticConfig cfg;
    cfg.num_clients = 212;
    cfg.seed = 1;
    const FederatedDataset data = generate_synthetic_leaf(cfg);
    const auto kept = filter_min_samples(data.clients, 64);
    CHECK(kept.size() <= 212);
    for (const ClientDataset& c : kept) CHECK(c.n_samples >= 64);
}

TEST_CASE("synthetic generation is deterministic") {
    SyntheticConfig cfg;
    cfg.num_clients = 4;
    cfg.seed = 9;
    const FederatedDataset a = generate_synthetic_leaf(cfg);
    const FederatedDataset b = generate_synthetic_leaf(cfg);
    REQUIRE(a.clients.size() == b.clients.size());
    for (std::size_t k = 0; k < a.clients.size(); ++k) {
        REQUIRE(a.clients[k].train.size() == b.clients[k].train.size());
        for (std::size_t i = 0; i < a.clients[k].train.size(); ++i) {
            CHECK(a.clients[k].train[i].features == b.clients[k].train[i].features);
            CHECK(a.clients[k].train[i].label == b.clients[k].train[i].label);
        }
    }
}

TEST_CASE("iid partition deals labels out evenly") {
    const BlobDataset blobs = generate_blobs(5, 4, 1000, 1.0, 2);
    PartitionConfig cfg;
    cfg.beta = std::numeric_limits<double>::infinity();
    cfg.num_clients = 10;
    cfg.seed = 3;
    const auto clients = dirichlet_partition(blobs.train, cfg);
    REQUIRE(clients.size() == 10);

    // 800 train examples, balanced-ish labels: every histogram cell within +-1
    // of every other client's cell for the same label.
    for (int label = 0; label < 5; ++label) {
        std::int64_t lo = INT64_MAX;
        std::int64_t hi = 0;
        for (const ClientDataset& c : clients) {
            std::int64_t count = std::count_if(c.train.begin(), c.train.end(),
                                               [&](const Example& ex) { return ex.label == label; });
            lo = std::min(lo, count);
            hi = std::max(hi, count);
        }
        CHECK(hi - lo <= 1);
    }
}

TEST_CASE("beta 0.5 partitions are visibly skewed") {
    const BlobDataset blobs = generate_blobs(5, 4, 2500, 1.0, 2);
    PartitionConfig cfg;
    cfg.beta = 0.5;
    cfg.num_clients = 10;
    cfg.seed = 4;
    const auto clients = dirichlet_partition(blobs.train, cfg);

    double mean_max_share = 0.0;
    for (int label = 0; label < 5; ++label) {
        std::int64_t total = 0;
        std::int64_t max_count = 0;
        for (const ClientDataset& c : clients) {
            const std::int64_t count = std::count_if(
                c.train.begin(), c.train.end(),
                [&](const Example& ex) { return ex.label == label; });
            total += count;
            max_count = std::max(max_count, count);
        }
        mean_max_share += static_cast<double>(max_count) / static_cast<double>(total);
    }
    mean_max_share /= 5.0;
    CHECK(mean_max_share > 0.25);
}

TEST_CASE("partitions conserve the example multiset") {
    const BlobDataset blobs = generate_blobs(4, 3, 600, 1.5, 8);
    PartitionConfig cfg;
    cfg.beta = 0.3;
    cfg.num_clients = 7;
    cfg.seed = 2;
    const auto clients = dirichlet_partition(blobs.train, cfg);

    std::vector<Example> reunited;
    std::int64_t total = 0;
    for (const ClientDataset& c : clients) {
        CHECK(c.n_samples == static_cast<std::int64_t>(c.train.size()));
        total += c.n_samples;
        reunited.insert(reunited.end(), c.train.begin(), c.train.end());
    }
    CHECK(total == static_cast<std::int64_t>(blobs.train.size()));
    CHECK(example_multiset(reunited) == example_multiset(blobs.train));
}

TEST_CASE("client label entropy rises with beta") {
    const BlobDataset blobs = generate_blobs(5, 4, 1200, 1.0, 6);
    double h_01 = 0.0;
    double h_1 = 0.0;
    double h_inf = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        PartitionConfig cfg;
        cfg.num_clients = 10;
        cfg.seed = seed;
        cfg.beta = 0.1;
        h_01 += mean_client_entropy(dirichlet_partition(blobs.train, cfg), 5);
        cfg.beta = 1.0;
        h_1 += mean_client_entropy(dirichlet_partition(blobs.train, cfg), 5);
        cfg.beta = std::numeric_limits<double>::infinity();
        h_inf += mean_client_entropy(dirichlet_partition(blobs.train, cfg), 5);
    }
    CHECK(h_01 < h_1);
    CHECK(h_1 < h_inf);
}

TEST_CASE("degenerate draws exhaust the redraw budget") {
    // 6 examples cannot cover 10 clients; every draw leaves someone empty.
    std::vector<Example> tiny;
    for (int i = 0; i < 6; ++i) tiny.push_back({{static_cast<double>(i)}, i % 3});
    PartitionConfig cfg;
    cfg.beta = 0.5;
    cfg.num_clients = 10;
    cfg.seed = 1;
    CHECK_THROWS_AS(dirichlet_partition(tiny, cfg), std::runtime_error);
}

TEST_CASE("filter_min_samples keeps the boundary") {
    Rng rng(1);
    std::vector<ClientDataset> clients;
    clients.push_back(make_client(0, random_examples(63, 2, 2, rng)));
    clients.push_back(make_client(1, random_examples(64, 2, 2, rng)));
    clients.push_back(make_client(2, random_examples(100, 2, 2, rng)));

    const auto kept = filter_min_samples(clients, 64);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].client_id == 1);
    CHECK(kept[1].client_id == 2);

    const auto all = filter_min_samples(kept, 64);
    CHECK(all.size() == 2);

    std::vector<ClientDataset> small;
    small.push_back(make_client(0, random_examples(10, 2, 2, rng)));
    CHECK_THROWS_AS(filter_min_samples(small, 64), std::runtime_error);
}

TEST_CASE("tsv round-trips examples exactly") {
    Rng rng(77);
    const auto examples = random_examples(40, 6, 4, rng);
    const auto path = std::filesystem::temp_directory_path() / "fedsim_test_examples.tsv";
    write_examples_tsv(path, examples);
    const auto back = read_examples_tsv(path);
    REQUIRE(back.size() == examples.size());
    for (std::size_t i = 0; i < examples.size(); ++i) {
        CHECK(back[i].features == examples[i].features);
        CHECK(back[i].label == examples[i].label);
    }
    std::filesystem::remove(path);
}

TEST_CASE("federated tsv directory round-trip") {
    SyntheticConfig cfg;
    cfg.num_clients = 3;
    cfg.seed = 2;
    const FederatedDataset data = generate_synthetic_leaf(cfg);
    const auto dir = std::filesystem::temp_directory_path() / "fedsim_test_tsvdir";
    std::filesystem::remove_all(dir);
    save_federated_tsv(dir, data);
    const FederatedDataset back = load_federated_tsv(dir);
    REQUIRE(back.clients.size() == data.clients.size());
    CHECK(back.test.size() == data.test.size());
    for (std::size_t k = 0; k < data.clients.size(); ++k) {
        CHECK(back.clients[k].client_id == data.clients[k].client_id);
        CHECK(back.clients[k].n_samples == data.clients[k].n_samples);
        for (std::size_t i = 0; i < data.clients[k].train.size(); ++i) {
            CHECK(back.clients[k].train[i].features == data.clients[k].train[i].features);
        }
    }
    std::filesystem::remove_all(dir);
}
