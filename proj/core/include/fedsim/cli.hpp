#pragma once

#include <string>
#include <vector>

namespace fedsim {

// Command-line entry point. Subcommands:
//   run     — single experiment: records.jsonl + summary.csv
//   sweep   — experiment matrix: per-cell records + one summary.csv
//   toy     — Local vs Cross training comparison
//   analyze — recompute summaries/bound margins from recorded JSONL
// Returns 0 on success, 1 on config/usage errors, 2 on training divergence.
int run_cli(const std::vector<std::string>& args);
int run_cli(int argc, const char* const* argv);

}  // namespace fedsim
