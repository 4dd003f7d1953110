#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedsim/rng.hpp"

namespace fedsim {

enum class ModelFamily { LinearSoftmax, Mlp1Hidden };
enum class Activation { Sigmoid, Relu };

// Describes a model's architecture and, implicitly, the flat parameter
// layout: W1 (row-major, out x in), then b1, then for the MLP W2 and b2.
struct ModelSpec {
    ModelFamily family = ModelFamily::LinearSoftmax;
    int input_dim = 0;
    int num_classes = 0;
    int hidden_dim = 0;                       // MLP only
    Activation activation = Activation::Sigmoid;  // MLP only

    bool operator==(const ModelSpec& other) const = default;
};

ModelSpec make_linear_softmax(int input_dim, int num_classes);
ModelSpec make_mlp(int input_dim, int hidden_dim, int num_classes,
                   Activation activation = Activation::Sigmoid);

// Total parameter count implied by a spec.
std::size_t param_count(const ModelSpec& spec);

// Throws std::invalid_argument if the spec's dimensions are not positive.
void validate_spec(const ModelSpec& spec);

// Flat 64-bit parameter vector tied to the ModelSpec that defines its layout.
// Treated as an immutable value: operations return fresh vectors.
struct ParamVector {
    ModelSpec layout;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
};

struct Example {
    std::vector<double> features;
    int label = 0;
};

// Non-empty view over examples; all features share the model input dimension.
using Batch = std::span<const Example>;

// --- parameter construction ---------------------------------------------

// Deterministic initialization: weights ~ Normal(0, 1/sqrt(fan_in)), biases
// exactly zero.
ParamVector init_params(const ModelSpec& spec, std::uint64_t seed);

ParamVector zeros_like(const ModelSpec& spec);

// --- model evaluation -----------------------------------------------------

// Class logits for one feature vector.
std::vector<double> forward_logits(const ModelSpec& spec, const ParamVector& params,
                                   std::span<const double> features);

// Mean softmax cross-entropy over the batch. Throws on layout/feature
// dimension mismatch or an empty batch.
double loss(const ModelSpec& spec, const ParamVector& params, Batch batch);

// Exact analytic gradient of loss, same layout as params.
ParamVector gradient(const ModelSpec& spec, const ParamVector& params, Batch batch);

// Loss and gradient in one pass (the gradient path computes the loss anyway).
double loss_and_gradient(const ModelSpec& spec, const ParamVector& params, Batch batch,
                         ParamVector& grad_out);

// Predicted class: argmax of logits, ties broken toward the lowest index.
int predict(const ModelSpec& spec, const ParamVector& params, std::span<const double> features);

// Fraction of examples whose argmax logit equals the label. Throws on an
// empty dataset.
double evaluate_accuracy(const ModelSpec& spec, const ParamVector& params,
                         std::span<const Example> dataset);

// --- vector arithmetic ------------------------------------------------------
// All reductions accumulate in fixed left-to-right index order so that
// trajectories are bit-reproducible.

void check_same_layout(const ParamVector& a, const ParamVector& b);

ParamVector add(const ParamVector& a, const ParamVector& b);
ParamVector subtract(const ParamVector& a, const ParamVector& b);
ParamVector scale(const ParamVector& a, double factor);

// a += factor * b, in place.
void axpy_in_place(ParamVector& a, double factor, const ParamVector& b);

// Sum_k weights[k] * vectors[k], coordinate-wise, k ascending.
ParamVector weighted_sum(const std::vector<ParamVector>& vectors,
                         const std::vector<double>& weights);

double squared_norm(const ParamVector& a);
double squared_distance(const ParamVector& a, const ParamVector& b);

bool all_finite(const ParamVector& a);

}  // namespace fedsim
