#include "fedsim/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace fedsim {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path.empty() ? what : path + ": " + what);
}

std::string join_path(const std::string& parent, const std::string& key) {
    return parent.empty() ? key : parent + "." + key;
}

void check_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.contains(key)) fail(join_path(path, key), "unknown key");
    }
}

double get_number(const json& obj, const std::string& path, const std::string& key,
                  double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) fail(join_path(path, key), "expected a number");
    return v.get<double>();
}

int get_int(const json& obj, const std::string& path, const std::string& key, int fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) fail(join_path(path, key), "expected an integer");
    return v.get<int>();
}

std::int64_t get_int64(const json& obj, const std::string& path, const std::string& key,
                       std::int64_t fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) fail(join_path(path, key), "expected an integer");
    return v.get<std::int64_t>();
}

std::uint64_t get_seed(const json& obj, const std::string& path, const std::string& key,
                       std::uint64_t fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) fail(join_path(path, key), "expected an integer seed");
    return v.get<std::uint64_t>();
}

bool get_bool(const json& obj, const std::string& path, const std::string& key, bool fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_boolean()) fail(join_path(path, key), "expected a boolean");
    return v.get<bool>();
}

std::string get_string(const json& obj, const std::string& path, const std::string& key) {
    if (!obj.contains(key)) fail(join_path(path, key), "missing required key");
    const json& v = obj.at(key);
    if (!v.is_string()) fail(join_path(path, key), "expected a string");
    return v.get<std::string>();
}

// beta accepts a positive number or the string "inf" for the IID case.
double parse_beta(const json& v, const std::string& path) {
    if (v.is_string()) {
        const std::string s = v.get<std::string>();
        if (s == "inf" || s == "infinity" || s == "+inf") {
            return std::numeric_limits<double>::infinity();
        }
        fail(path, "expected a positive number or \"inf\"");
    }
    if (!v.is_number()) fail(path, "expected a positive number or \"inf\"");
    const double beta = v.get<double>();
    if (!(beta > 0.0)) fail(path, "must be > 0");
    return beta;
}

json beta_to_json(double beta) {
    if (std::isinf(beta)) return json("inf");
    return json(beta);
}

DatasetSpec parse_dataset(const json& obj, std::uint64_t default_seed, bool* seed_pinned) {
    const std::string path = "dataset";
    if (!obj.is_object()) fail(path, "expected an object");
    const std::string kind = get_string(obj, path, "kind");
    if (seed_pinned != nullptr) *seed_pinned = obj.contains("seed");

    if (kind == "blob") {
        check_keys(obj, path, {"kind", "num_classes", "input_dim", "n_total", "class_sep", "seed"});
        BlobSpec blob;
        blob.num_classes = get_int(obj, path, "num_classes", blob.num_classes);
        blob.input_dim = get_int(obj, path, "input_dim", blob.input_dim);
        blob.n_total = get_int(obj, path, "n_total", blob.n_total);
        blob.class_sep = get_number(obj, path, "class_sep", blob.class_sep);
        blob.seed = get_seed(obj, path, "seed", default_seed);
        if (blob.num_classes < 2) fail("dataset.num_classes", "must be >= 2");
        if (blob.input_dim < 1) fail("dataset.input_dim", "must be >= 1");
        if (blob.n_total < 10 * blob.num_classes) {
            fail("dataset.n_total", "must be >= 10 * num_classes");
        }
        if (blob.class_sep < 0.0) fail("dataset.class_sep", "must be >= 0");
        return blob;
    }
    if (kind == "leaf-synthetic") {
        check_keys(obj, path,
                   {"kind", "num_clients", "num_classes", "num_features", "alpha", "beta_gen",
                    "sample_mu", "sample_sigma", "sample_min", "iid_model", "seed"});
        SyntheticConfig synth;
        synth.num_clients = get_int(obj, path, "num_clients", synth.num_clients);
        synth.num_classes = get_int(obj, path, "num_classes", synth.num_classes);
        synth.num_features = get_int(obj, path, "num_features", synth.num_features);
        synth.alpha = get_number(obj, path, "alpha", synth.alpha);
        synth.beta_gen = get_number(obj, path, "beta_gen", synth.beta_gen);
        synth.sample_mu = get_number(obj, path, "sample_mu", synth.sample_mu);
        synth.sample_sigma = get_number(obj, path, "sample_sigma", synth.sample_sigma);
        synth.sample_min = get_int(obj, path, "sample_min", synth.sample_min);
        synth.iid_model = get_bool(obj, path, "iid_model", synth.iid_model);
        synth.seed = get_seed(obj, path, "seed", default_seed);
        if (synth.num_clients < 1) fail("dataset.num_clients", "must be >= 1");
        if (synth.num_classes < 2) fail("dataset.num_classes", "must be >= 2");
        if (synth.num_features < 1) fail("dataset.num_features", "must be >= 1");
        if (synth.sample_min < 1) fail("dataset.sample_min", "must be >= 1");
        if (synth.alpha < 0.0) fail("dataset.alpha", "must be >= 0");
        if (synth.beta_gen < 0.0) fail("dataset.beta_gen", "must be >= 0");
        if (synth.sample_sigma < 0.0) fail("dataset.sample_sigma", "must be >= 0");
        return synth;
    }
    if (kind == "tsv") {
        check_keys(obj, path, {"kind", "dir"});
        TsvSpec tsv;
        tsv.dir = get_string(obj, path, "dir");
        return tsv;
    }
    fail("dataset.kind", "must be one of \"blob\", \"leaf-synthetic\", \"tsv\"");
}

ExperimentConfig parse_experiment(const json& doc, std::optional<std::uint64_t> seed_override,
                                  bool* dataset_seed_pinned, bool* partition_seed_pinned) {
    if (!doc.is_object()) fail("", "config root must be a JSON object");
    check_keys(doc, "",
               {"dataset", "partition", "strategy", "local", "rounds", "sample_fraction",
                "eval_every", "min_samples", "seed"});
    if (!doc.contains("dataset")) fail("dataset", "missing required key");

    ExperimentConfig cfg;
    cfg.seed = get_seed(doc, "", "seed", 0);
    if (seed_override) cfg.seed = *seed_override;

    cfg.dataset = parse_dataset(doc.at("dataset"), cfg.seed, dataset_seed_pinned);

    if (partition_seed_pinned != nullptr) *partition_seed_pinned = false;
    cfg.partition.seed = cfg.seed;
    if (doc.contains("partition")) {
        const json& part = doc.at("partition");
        if (!part.is_object()) fail("partition", "expected an object");
        check_keys(part, "partition", {"beta", "num_clients", "seed"});
        if (part.contains("beta")) cfg.partition.beta = parse_beta(part.at("beta"), "partition.beta");
        cfg.partition.num_clients = get_int(part, "partition", "num_clients", cfg.partition.num_clients);
        if (cfg.partition.num_clients < 1) fail("partition.num_clients", "must be >= 1");
        if (part.contains("seed") && partition_seed_pinned != nullptr) *partition_seed_pinned = true;
        cfg.partition.seed = get_seed(part, "partition", "seed", cfg.seed);
    }

    if (doc.contains("strategy")) {
        const json& strat = doc.at("strategy");
        if (!strat.is_object()) fail("strategy", "expected an object");
        check_keys(strat, "strategy", {"kind", "mu", "delta"});
        const std::string kind = get_string(strat, "strategy", "kind");
        try {
            cfg.strategy.kind = strategy_from_name(kind);
        } catch (const std::invalid_argument&) {
            fail("strategy.kind", "unknown strategy \"" + kind + "\"");
        }
        cfg.strategy.mu = get_number(strat, "strategy", "mu", cfg.strategy.mu);
        cfg.strategy.delta = get_int(strat, "strategy", "delta", cfg.strategy.delta);
        if (cfg.strategy.mu < 0.0) fail("strategy.mu", "must be >= 0");
        if (cfg.strategy.delta < 1) fail("strategy.delta", "must be >= 1");
    }

    if (doc.contains("local")) {
        const json& local = doc.at("local");
        if (!local.is_object()) fail("local", "expected an object");
        check_keys(local, "local", {"epochs", "lr", "batch_size", "momentum", "weight_decay"});
        cfg.local.epochs = get_int(local, "local", "epochs", cfg.local.epochs);
        cfg.local.lr = get_number(local, "local", "lr", cfg.local.lr);
        cfg.local.batch_size = get_int(local, "local", "batch_size", cfg.local.batch_size);
        cfg.local.momentum = get_number(local, "local", "momentum", cfg.local.momentum);
        cfg.local.weight_decay = get_number(local, "local", "weight_decay", cfg.local.weight_decay);
        if (cfg.local.epochs < 0) fail("local.epochs", "must be >= 0");
        if (!(cfg.local.lr > 0.0)) fail("local.lr", "must be > 0");
        if (cfg.local.batch_size < 1) fail("local.batch_size", "must be >= 1");
        if (cfg.local.momentum < 0.0 || cfg.local.momentum >= 1.0) {
            fail("local.momentum", "must be in [0, 1)");
        }
        if (cfg.local.weight_decay < 0.0) fail("local.weight_decay", "must be >= 0");
    }

    cfg.rounds = get_int(doc, "", "rounds", cfg.rounds);
    if (cfg.rounds < 1) fail("rounds", "must be >= 1");
    cfg.sample_fraction = get_number(doc, "", "sample_fraction", cfg.sample_fraction);
    if (!(cfg.sample_fraction > 0.0 && cfg.sample_fraction <= 1.0)) {
        fail("sample_fraction", "must be in (0, 1]");
    }
    cfg.eval_every = get_int(doc, "", "eval_every", cfg.eval_every);
    if (cfg.eval_every < 1) fail("eval_every", "must be >= 1");
    cfg.min_samples = get_int64(doc, "", "min_samples", cfg.min_samples);
    if (cfg.min_samples < 1) fail("min_samples", "must be >= 1");

    if (std::holds_alternative<BlobSpec>(cfg.dataset) ||
        std::holds_alternative<TsvSpec>(cfg.dataset)) {
        if (cfg.sample_fraction * cfg.partition.num_clients < 1.0) {
            fail("sample_fraction", "sample_fraction * partition.num_clients must be >= 1");
        }
    }
    return cfg;
}

template <typename T>
std::vector<T> parse_list(const json& arr, const std::string& path,
                          T (*element)(const json&, const std::string&)) {
    if (!arr.is_array()) fail(path, "expected an array");
    std::vector<T> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        out.push_back(element(arr.at(i), path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

SweepSpec parse_sweep(const json& doc, std::optional<std::uint64_t> seed_override) {
    check_keys(doc, "", {"sweep", "base"});
    if (!doc.contains("base")) fail("base", "missing required key");
    SweepSpec spec;
    spec.base = parse_experiment(doc.at("base"), seed_override, &spec.dataset_seed_pinned,
                                 &spec.partition_seed_pinned);

    const json& sweep = doc.at("sweep");
    if (!sweep.is_object()) fail("sweep", "expected an object");
    check_keys(sweep, "sweep", {"strategy", "delta", "beta", "seed", "max_cells"});

    if (sweep.contains("strategy")) {
        spec.strategies = parse_list<StrategyKind>(sweep.at("strategy"), "sweep.strategy",
            +[](const json& v, const std::string& path) {
                if (!v.is_string()) fail(path, "expected a strategy name");
                try {
                    return strategy_from_name(v.get<std::string>());
                } catch (const std::invalid_argument&) {
                    fail(path, "unknown strategy \"" + v.get<std::string>() + "\"");
                }
            });
    }
    if (sweep.contains("delta")) {
        spec.deltas = parse_list<int>(sweep.at("delta"), "sweep.delta",
            +[](const json& v, const std::string& path) {
                if (!v.is_number_integer() || v.get<int>() < 1) fail(path, "must be an integer >= 1");
                return v.get<int>();
            });
    }
    if (sweep.contains("beta")) {
        spec.betas = parse_list<double>(sweep.at("beta"), "sweep.beta", +parse_beta);
    }
    if (sweep.contains("seed")) {
        spec.seeds = parse_list<std::uint64_t>(sweep.at("seed"), "sweep.seed",
            +[](const json& v, const std::string& path) {
                if (!v.is_number_integer()) fail(path, "expected an integer seed");
                return v.get<std::uint64_t>();
            });
    }
    spec.max_cells = get_int(sweep, "sweep", "max_cells", spec.max_cells);
    if (spec.max_cells < 1) fail("sweep.max_cells", "must be >= 1");
    return spec;
}

std::string format_beta_label(double beta) {
    if (std::isinf(beta)) return "inf";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", beta);
    return buf;
}

}  // namespace

std::string SweepCell::label() const {
    std::string s = strategy_name(strategy);
    if (delta) s += "_d" + std::to_string(*delta);
    if (beta) s += "_b" + format_beta_label(*beta);
    s += "_s" + std::to_string(seed);
    return s;
}

std::vector<SweepCell> expand_sweep(const SweepSpec& spec) {
    std::vector<StrategyKind> strategies = spec.strategies;
    if (strategies.empty()) strategies = {spec.base.strategy.kind};
    std::vector<int> deltas = spec.deltas;
    if (deltas.empty()) deltas = {spec.base.strategy.delta};
    std::vector<std::optional<double>> betas;
    if (spec.betas.empty()) {
        betas = {std::nullopt};
    } else {
        for (double b : spec.betas) betas.emplace_back(b);
    }
    std::vector<std::uint64_t> seeds = spec.seeds;
    if (seeds.empty()) seeds = {spec.base.seed};

    std::vector<SweepCell> cells;
    for (StrategyKind strategy : strategies) {
        const bool uses_delta = strategy == StrategyKind::FedSkip;
        const std::vector<int> strategy_deltas = uses_delta ? deltas : std::vector<int>{1};
        for (int delta : strategy_deltas) {
            for (const auto& beta : betas) {
                for (std::uint64_t seed : seeds) {
                    SweepCell cell;
                    cell.config = spec.base;
                    cell.config.strategy.kind = strategy;
                    cell.config.strategy.delta = uses_delta ? delta : 1;
                    cell.config.seed = seed;
                    if (!spec.dataset_seed_pinned) {
                        std::visit([&](auto& d) {
                            if constexpr (!std::is_same_v<std::decay_t<decltype(d)>, TsvSpec>) {
                                d.seed = seed;
                            }
                        }, cell.config.dataset);
                    }
                    if (!spec.partition_seed_pinned) cell.config.partition.seed = seed;
                    if (beta) cell.config.partition.beta = *beta;
                    cell.strategy = strategy;
                    if (uses_delta) cell.delta = delta;
                    cell.beta = beta;
                    cell.seed = seed;
                    cells.push_back(std::move(cell));
                    if (cells.size() > static_cast<std::size_t>(spec.max_cells)) {
                        throw ConfigError("sweep: cell count exceeds max_cells (" +
                                          std::to_string(spec.max_cells) + ")");
                    }
                }
            }
        }
    }
    return cells;
}

ParsedConfig parse_config_text(const std::string& text,
                               std::optional<std::uint64_t> seed_override) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config root must be a JSON object");
    if (doc.contains("sweep")) return parse_sweep(doc, seed_override);
    return parse_experiment(doc, seed_override, nullptr, nullptr);
}

ParsedConfig parse_config(const std::filesystem::path& path,
                          std::optional<std::uint64_t> seed_override) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config_text(text, seed_override);
}

std::string serialize_config(const ExperimentConfig& cfg) {
    json doc;
    json dataset;
    if (const auto* blob = std::get_if<BlobSpec>(&cfg.dataset)) {
        dataset["kind"] = "blob";
        dataset["num_classes"] = blob->num_classes;
        dataset["input_dim"] = blob->input_dim;
        dataset["n_total"] = blob->n_total;
        dataset["class_sep"] = blob->class_sep;
        dataset["seed"] = blob->seed;
    } else if (const auto* synth = std::get_if<SyntheticConfig>(&cfg.dataset)) {
        dataset["kind"] = "leaf-synthetic";
        dataset["num_clients"] = synth->num_clients;
        dataset["num_classes"] = synth->num_classes;
        dataset["num_features"] = synth->num_features;
        dataset["alpha"] = synth->alpha;
        dataset["beta_gen"] = synth->beta_gen;
        dataset["sample_mu"] = synth->sample_mu;
        dataset["sample_sigma"] = synth->sample_sigma;
        dataset["sample_min"] = synth->sample_min;
        dataset["iid_model"] = synth->iid_model;
        dataset["seed"] = synth->seed;
    } else {
        dataset["kind"] = "tsv";
        dataset["dir"] = std::get<TsvSpec>(cfg.dataset).dir;
    }
    doc["dataset"] = dataset;
    doc["partition"] = {{"beta", beta_to_json(cfg.partition.beta)},
                        {"num_clients", cfg.partition.num_clients},
                        {"seed", cfg.partition.seed}};
    doc["strategy"] = {{"kind", strategy_name(cfg.strategy.kind)},
                       {"mu", cfg.strategy.mu},
                       {"delta", cfg.strategy.delta}};
    doc["local"] = {{"epochs", cfg.local.epochs},
                    {"lr", cfg.local.lr},
                    {"batch_size", cfg.local.batch_size},
                    {"momentum", cfg.local.momentum},
                    {"weight_decay", cfg.local.weight_decay}};
    doc["rounds"] = cfg.rounds;
    doc["sample_fraction"] = cfg.sample_fraction;
    doc["eval_every"] = cfg.eval_every;
    doc["min_samples"] = cfg.min_samples;
    doc["seed"] = cfg.seed;
    return doc.dump(2);
}

}  // namespace fedsim
