#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

// Local models went non-finite during training. Carries enough context for
// the orchestrator to point at the offending round/client.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LocalConfig {
    int epochs = 10;
    double lr = 0.01;
    int batch_size = 64;
    double momentum = 0.9;
    double weight_decay = 1e-5;
    double prox_mu = 0.0;  // 0 disables the proximal term
    std::uint64_t seed = 0;
};

// SCAFFOLD control variates: the server's c and this client's c_k.
struct ControlVariates {
    ParamVector c_global;
    ParamVector c_local;
};

struct LocalResult {
    ParamVector params;
    std::int64_t steps_taken = 0;   // epochs * ceil(N_k / batch_size)
    std::int64_t samples_seen = 0;  // epochs * N_k
    std::optional<ParamVector> control_delta;  // SCAFFOLD only
    double max_grad_norm = 0.0;  // max minibatch-gradient L2 norm seen (raw, uncorrected)
};

// Random permutation of the examples, cut into consecutive chunks of
// batch_size; the final short chunk is kept.
std::vector<std::vector<Example>> make_batches(const std::vector<Example>& data, int batch_size,
                                               Rng& rng);

// Runs cfg.epochs epochs of mini-batch SGD from `start`. Per step the applied
// gradient is grad + weight_decay*w + prox_mu*(w - anchor) + (c_global - c_k),
// passed through the momentum buffer (reset at call entry). With controls
// present, control_delta = (start - final)/(lr * steps) - c_global.
// Throws DivergenceError if parameters go non-finite.
LocalResult train_local(const ParamVector& start, const ClientDataset& data,
                        const LocalConfig& cfg,
                        const ParamVector* anchor = nullptr,
                        const ControlVariates* controls = nullptr);

}  // namespace fedsim
