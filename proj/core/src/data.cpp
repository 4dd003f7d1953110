#include "fedsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace fedsim {

namespace {

std::vector<std::vector<double>> blob_centers(int num_classes, int input_dim, double class_sep,
                                              Rng& rng) {
    // Orthogonal axis centers scaled by class_sep/sqrt(2) are pairwise
    // exactly class_sep apart; extra classes beyond input_dim fall back to
    // random unit directions at the same radius.
    const double radius = class_sep / std::sqrt(2.0);
    std::vector<std::vector<double>> centers(num_classes, std::vector<double>(input_dim, 0.0));
    for (int c = 0; c < num_classes; ++c) {
        if (c < input_dim) {
            centers[c][c] = radius;
        } else {
            double norm_sq = 0.0;
            for (int j = 0; j < input_dim; ++j) {
                centers[c][j] = rng.normal();
                norm_sq += centers[c][j] * centers[c][j];
            }
            const double inv = radius / std::sqrt(std::max(norm_sq, 1e-300));
            for (int j = 0; j < input_dim; ++j) centers[c][j] *= inv;
        }
    }
    return centers;
}

int max_label(const std::vector<Example>& examples) {
    int m = -1;
    for (const Example& ex : examples) m = std::max(m, ex.label);
    return m;
}

std::size_t categorical(const std::vector<double>& probs, Rng& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        cum += probs[i];
        if (u < cum) return i;
    }
    return probs.size() - 1;
}

void format_double(std::string& out, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

BlobDataset generate_blobs(int num_classes, int input_dim, int n_total, double class_sep,
                           std::uint64_t seed) {
    if (num_classes <= 0 || input_dim <= 0) {
        throw std::invalid_argument("generate_blobs: dimensions must be positive");
    }
    if (n_total < 10 * num_classes) {
        throw std::invalid_argument("generate_blobs: n_total must be at least 10 * num_classes");
    }
    Rng rng(stream_seed(seed, 0x626c6f62ULL));  // "blob"
    const auto centers = blob_centers(num_classes, input_dim, class_sep, rng);

    std::vector<Example> all(n_total);
    for (int i = 0; i < n_total; ++i) {
        const int label = i % num_classes;
        Example& ex = all[i];
        ex.label = label;
        ex.features.resize(input_dim);
        for (int j = 0; j < input_dim; ++j) ex.features[j] = centers[label][j] + rng.normal();
    }
    rng.shuffle(all);

    const std::size_t n_test = static_cast<std::size_t>(n_total) / 5;
    BlobDataset out;
    out.test.assign(all.begin(), all.begin() + n_test);
    out.train.assign(all.begin() + n_test, all.end());
    return out;
}

FederatedDataset generate_synthetic_leaf(const SyntheticConfig& cfg) {
    if (cfg.num_clients <= 0 || cfg.num_classes <= 0 || cfg.num_features <= 0 ||
        cfg.sample_min <= 0) {
        throw std::invalid_argument("generate_synthetic_leaf: counts must be positive");
    }
    Rng rng(stream_seed(cfg.seed, 0x6c656166ULL));  // "leaf"
    const int d = cfg.num_features;
    const int C = cfg.num_classes;

    // Feature covariance is diagonal with decaying variance j^(-1.2).
    std::vector<double> feature_std(d);
    for (int j = 0; j < d; ++j) feature_std[j] = std::pow(static_cast<double>(j + 1), -0.6);

    double shared_u = 0.0;
    double shared_b_center = 0.0;
    std::vector<double> shared_w;
    std::vector<double> shared_bias;
    if (cfg.iid_model) {
        shared_u = rng.normal(0.0, cfg.alpha);
        shared_b_center = rng.normal(0.0, cfg.beta_gen);
        shared_w.resize(static_cast<std::size_t>(C) * d);
        shared_bias.resize(C);
        for (double& w : shared_w) w = rng.normal(shared_u, 1.0);
        for (double& b : shared_bias) b = rng.normal(shared_u, 1.0);
    }

    FederatedDataset out;
    out.clients.reserve(cfg.num_clients);
    std::vector<double> w;
    std::vector<double> bias;
    std::vector<double> center(d);
    std::vector<double> logits(C);

    for (int k = 0; k < cfg.num_clients; ++k) {
        double b_center;
        if (cfg.iid_model) {
            w = shared_w;
            bias = shared_bias;
            b_center = shared_b_center;
        } else {
            const double u_k = rng.normal(0.0, cfg.alpha);
            b_center = rng.normal(0.0, cfg.beta_gen);
            w.resize(static_cast<std::size_t>(C) * d);
            bias.resize(C);
            for (double& wi : w) wi = rng.normal(u_k, 1.0);
            for (double& bi : bias) bi = rng.normal(u_k, 1.0);
        }
        for (int j = 0; j < d; ++j) center[j] = rng.normal(b_center, 1.0);

        const auto n_k = static_cast<std::int64_t>(rng.lognormal(cfg.sample_mu, cfg.sample_sigma)) +
                         cfg.sample_min;

        std::vector<Example> samples(n_k);
        for (auto& ex : samples) {
            ex.features.resize(d);
            for (int j = 0; j < d; ++j) {
                ex.features[j] = center[j] + feature_std[j] * rng.normal();
            }
            for (int c = 0; c < C; ++c) {
                double s = bias[c];
                const double* row = w.data() + static_cast<std::size_t>(c) * d;
                for (int j = 0; j < d; ++j) s += row[j] * ex.features[j];
                logits[c] = s;
            }
            int best = 0;
            for (int c = 1; c < C; ++c) {
                if (logits[c] > logits[best]) best = c;
            }
            ex.label = best;
        }

        // Hold out the last 20% of each client's samples into the shared
        // test pool.
        const std::size_t n_test = samples.size() / 5;
        const std::size_t n_train = samples.size() - n_test;
        ClientDataset client;
        client.client_id = k;
        client.train.assign(samples.begin(), samples.begin() + n_train);
        client.n_samples = static_cast<std::int64_t>(client.train.size());
        out.test.insert(out.test.end(), samples.begin() + n_train, samples.end());
        out.clients.push_back(std::move(client));
    }
    return out;
}

std::vector<ClientDataset> dirichlet_partition(const std::vector<Example>& train,
                                               const PartitionConfig& cfg) {
    if (cfg.num_clients <= 0) throw std::invalid_argument("dirichlet_partition: num_clients must be positive");
    if (!(cfg.beta > 0.0)) throw std::invalid_argument("dirichlet_partition: beta must be positive");
    if (train.empty()) throw std::invalid_argument("dirichlet_partition: train set is empty");

    const int num_classes = max_label(train) + 1;
    std::vector<std::vector<std::size_t>> by_label(num_classes);
    for (std::size_t i = 0; i < train.size(); ++i) {
        const int l = train[i].label;
        if (l < 0) throw std::invalid_argument("dirichlet_partition: negative label");
        by_label[l].push_back(i);
    }
    for (int l = 0; l < num_classes; ++l) {
        if (by_label[l].empty()) {
            throw std::invalid_argument("dirichlet_partition: train labels must cover all classes");
        }
    }

    const std::size_t K = static_cast<std::size_t>(cfg.num_clients);
    Rng rng(stream_seed(cfg.seed, 0x64697269ULL));  // "diri"
    const bool iid = std::isinf(cfg.beta);

    std::vector<std::vector<std::size_t>> assignment;
    const int max_redraws = 100;
    for (int attempt = 0; attempt <= max_redraws; ++attempt) {
        assignment.assign(K, {});
        for (int l = 0; l < num_classes; ++l) {
            if (iid) {
                for (std::size_t i = 0; i < by_label[l].size(); ++i) {
                    assignment[i % K].push_back(by_label[l][i]);
                }
            } else {
                const std::vector<double> props = rng.dirichlet_symmetric(cfg.beta, K);
                for (std::size_t idx : by_label[l]) {
                    assignment[categorical(props, rng)].push_back(idx);
                }
            }
        }
        const bool any_empty = std::any_of(assignment.begin(), assignment.end(),
                                           [](const auto& a) { return a.empty(); });
        if (!any_empty) break;
        if (iid) break;  // round-robin can only leave clients empty when K > |train|
        if (attempt == max_redraws) {
            throw std::runtime_error(
                "dirichlet_partition: redraw budget exhausted (beta too extreme for client count)");
        }
    }
    if (std::any_of(assignment.begin(), assignment.end(), [](const auto& a) { return a.empty(); })) {
        throw std::runtime_error("dirichlet_partition: a client received no examples");
    }

    std::vector<ClientDataset> clients(K);
    for (std::size_t k = 0; k < K; ++k) {
        clients[k].client_id = static_cast<int>(k);
        // Keep input order within each client.
        std::sort(assignment[k].begin(), assignment[k].end());
        clients[k].train.reserve(assignment[k].size());
        for (std::size_t idx : assignment[k]) clients[k].train.push_back(train[idx]);
        clients[k].n_samples = static_cast<std::int64_t>(clients[k].train.size());
    }
    return clients;
}

std::vector<ClientDataset> filter_min_samples(const std::vector<ClientDataset>& clients,
                                              std::int64_t minimum) {
    std::vector<ClientDataset> kept;
    for (const ClientDataset& c : clients) {
        if (c.n_samples >= minimum) kept.push_back(c);
    }
    if (kept.empty()) {
        throw std::runtime_error("filter_min_samples: no client meets the minimum sample count");
    }
    return kept;
}

void write_examples_tsv(const std::filesystem::path& path, const std::vector<Example>& examples) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    std::string line;
    for (const Example& ex : examples) {
        line.clear();
        for (std::size_t j = 0; j < ex.features.size(); ++j) {
            if (j > 0) line += ',';
            format_double(line, ex.features[j]);
        }
        line += '\t';
        line += std::to_string(ex.label);
        line += '\n';
        out << line;
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<Example> read_examples_tsv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
    std::vector<Example> examples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::size_t tab = line.find('\t');
        if (tab == std::string::npos) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": missing tab separator");
        }
        Example ex;
        const char* p = line.c_str();
        const char* end = p + tab;
        while (p < end) {
            char* next = nullptr;
            ex.features.push_back(std::strtod(p, &next));
            if (next == p) {
                throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                         ": malformed feature value");
            }
            p = next;
            if (p < end && *p == ',') ++p;
        }
        ex.label = std::stoi(line.substr(tab + 1));
        if (ex.label < 0) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                     ": negative label");
        }
        examples.push_back(std::move(ex));
    }
    return examples;
}

void save_federated_tsv(const std::filesystem::path& dir, const FederatedDataset& data) {
    std::filesystem::create_directories(dir);
    for (const ClientDataset& c : data.clients) {
        write_examples_tsv(dir / ("client_" + std::to_string(c.client_id) + ".tsv"), c.train);
    }
    write_examples_tsv(dir / "test.tsv", data.test);
}

FederatedDataset load_federated_tsv(const std::filesystem::path& dir) {
    FederatedDataset data;
    std::vector<std::pair<int, std::filesystem::path>> client_files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string name = entry.path().filename().string();
        if (name.starts_with("client_") && name.ends_with(".tsv")) {
            const std::string id_str = name.substr(7, name.size() - 7 - 4);
            client_files.emplace_back(std::stoi(id_str), entry.path());
        }
    }
    if (client_files.empty()) {
        throw std::runtime_error("no client_<id>.tsv files found in " + dir.string());
    }
    std::sort(client_files.begin(), client_files.end());
    for (const auto& [id, path] : client_files) {
        ClientDataset c;
        c.client_id = id;
        c.train = read_examples_tsv(path);
        c.n_samples = static_cast<std::int64_t>(c.train.size());
        data.clients.push_back(std::move(c));
    }
    data.test = read_examples_tsv(dir / "test.tsv");
    return data;
}

}  // namespace fedsim
