#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fedsim/orchestrator.hpp"

namespace fedsim {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Experiment grid: the cartesian product of the axes below over a shared base
// config. Axes left empty fall back to the base value. The delta axis applies
// to fedskip cells only.
struct SweepSpec {
    ExperimentConfig base;
    std::vector<StrategyKind> strategies;
    std::vector<int> deltas;
    std::vector<double> betas;
    std::vector<std::uint64_t> seeds;
    int max_cells = 256;
    // Whether the base config pinned these seeds explicitly; unpinned seeds
    // follow the sweep's seed axis so each seed is an independent trial.
    bool dataset_seed_pinned = false;
    bool partition_seed_pinned = false;
};

struct SweepCell {
    ExperimentConfig config;
    StrategyKind strategy = StrategyKind::FedAvg;
    std::optional<int> delta;
    std::optional<double> beta;
    std::uint64_t seed = 0;

    // File-name friendly cell identifier, e.g. "fedskip_d3_b0.5_s1".
    std::string label() const;
};

std::vector<SweepCell> expand_sweep(const SweepSpec& spec);

using ParsedConfig = std::variant<ExperimentConfig, SweepSpec>;

// Parses a JSON config file. A top-level "sweep" key selects the sweep form;
// otherwise the document is a single experiment. Unknown keys and invariant
// violations raise ConfigError naming the offending field path. seed_override
// replaces the top-level seed before defaults are resolved (dataset and
// partition seeds default to it unless pinned).
ParsedConfig parse_config(const std::filesystem::path& path,
                          std::optional<std::uint64_t> seed_override = std::nullopt);

// Parse from an in-memory JSON document (same rules).
ParsedConfig parse_config_text(const std::string& text,
                               std::optional<std::uint64_t> seed_override = std::nullopt);

// Serializes a fully-resolved config; parse_config_text(serialize_config(c))
// returns c exactly.
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace fedsim
