#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fedsim {

// Deterministic random stream. All distribution draws are implemented on top
// of the raw mt19937_64 output so that sequences depend only on the seed, not
// on the standard library's (unspecified) distribution algorithms. Every
// stochastic component of the simulator owns one of these, seeded through
// stream_seed, so results are independent of thread scheduling.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Uniform in (0, 1]; safe as a log argument.
    double uniform_open() {
        return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1.0p-53;
    }

    // Uniform integer in [0, n). Rejection-sampled, unbiased.
    std::uint64_t uniform_index(std::uint64_t n);

    // Standard normal via Box-Muller (pairs are not cached; one draw
    // consumes exactly two uniforms).
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // exp(Normal(mu, sigma)).
    double lognormal(double mu, double sigma) { return std::exp(normal(mu, sigma)); }

    // Gamma(shape, 1) via Marsaglia-Tsang, with the alpha < 1 boost.
    double gamma(double shape);

    // Dirichlet(concentration, ..., concentration) over n components.
    std::vector<double> dirichlet_symmetric(double concentration, std::size_t n);

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    // Random permutation of {0, ..., n-1}.
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::mt19937_64 gen_;
};

// Derives an independent stream seed from a base seed and up to three stream
// coordinates (purpose tag, round, client id). SplitMix64-style mixing; two
// streams collide only if all four inputs match.
std::uint64_t stream_seed(std::uint64_t base, std::uint64_t tag,
                          std::uint64_t a = 0, std::uint64_t b = 0);

// Stream purpose tags used by the orchestrator. Public so that tests can
// reproduce the exact per-(round, client) seeds of a run.
namespace stream_tag {
inline constexpr std::uint64_t kInitParams = 1;
inline constexpr std::uint64_t kSampleClients = 2;
inline constexpr std::uint64_t kShuffleModels = 3;
inline constexpr std::uint64_t kLocalTraining = 4;
}  // namespace stream_tag

}  // namespace fedsim
