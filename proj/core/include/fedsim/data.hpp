#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedsim/model.hpp"

namespace fedsim {

// One client's training shard. n_samples mirrors train.size() and is the N_k
// used for aggregation weights.
struct ClientDataset {
    int client_id = 0;
    std::vector<Example> train;
    std::int64_t n_samples = 0;
};

// Dirichlet label-skew partition. beta = +infinity encodes the IID case
// (each label dealt round-robin).
struct PartitionConfig {
    double beta = 0.5;
    int num_clients = 10;
    std::uint64_t seed = 0;
};

// LEAF-style synthetic task: per-client linear labeling functions whose
// parameters are themselves drawn from client-level priors.
struct SyntheticConfig {
    int num_clients = 50;
    int num_classes = 5;
    int num_features = 60;
    double alpha = 1.0;     // stddev of the per-client model-center prior
    double beta_gen = 1.0;  // stddev of the per-client feature-center prior
    double sample_mu = 4.0;
    double sample_sigma = 0.5;
    int sample_min = 64;
    bool iid_model = false;  // one shared (B, u) pair and one shared labeling function
    std::uint64_t seed = 0;
};

struct BlobDataset {
    std::vector<Example> train;
    std::vector<Example> test;
};

struct FederatedDataset {
    std::vector<ClientDataset> clients;
    std::vector<Example> test;
};

// Per-class Gaussian clusters with unit covariance, centers pairwise
// class_sep apart (orthogonal axes while input_dim allows, random unit
// directions beyond that), balanced labels, 80/20 train/test split.
BlobDataset generate_blobs(int num_classes, int input_dim, int n_total, double class_sep,
                           std::uint64_t seed);

// Generates per-client datasets plus a shared test set (20% of each client's
// samples are pooled into the test set). No minimum-size filtering here.
FederatedDataset generate_synthetic_leaf(const SyntheticConfig& cfg);

// Splits examples across cfg.num_clients by per-label Dirichlet draws. Any
// draw leaving a client empty overall is redrawn, up to 100 attempts.
std::vector<ClientDataset> dirichlet_partition(const std::vector<Example>& train,
                                               const PartitionConfig& cfg);

// Keeps clients with n_samples >= minimum, order preserved. Throws if the
// result would be empty.
std::vector<ClientDataset> filter_min_samples(const std::vector<ClientDataset>& clients,
                                              std::int64_t minimum = 64);

// --- TSV serialization -----------------------------------------------------
// One example per line: comma-separated feature decimals, a tab, the label.

void write_examples_tsv(const std::filesystem::path& path, const std::vector<Example>& examples);
std::vector<Example> read_examples_tsv(const std::filesystem::path& path);

// Writes client_<id>.tsv per client plus test.tsv.
void save_federated_tsv(const std::filesystem::path& dir, const FederatedDataset& data);
FederatedDataset load_federated_tsv(const std::filesystem::path& dir);

}  // namespace fedsim
