#include "fedsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fedsim {

namespace {

// Offsets of the layout segments within the flat vector.
struct Layout {
    std::size_t w1 = 0;  // out1 x input_dim, row-major
    std::size_t b1 = 0;  // out1
    std::size_t w2 = 0;  // num_classes x hidden (MLP only)
    std::size_t b2 = 0;  // num_classes (MLP only)
    std::size_t total = 0;
    int out1 = 0;  // rows of W1: num_classes (linear) or hidden_dim (MLP)
};

Layout layout_of(const ModelSpec& spec) {
    Layout l;
    const std::size_t d = static_cast<std::size_t>(spec.input_dim);
    if (spec.family == ModelFamily::LinearSoftmax) {
        l.out1 = spec.num_classes;
        l.w1 = 0;
        l.b1 = l.w1 + static_cast<std::size_t>(l.out1) * d;
        l.total = l.b1 + static_cast<std::size_t>(l.out1);
    } else {
        l.out1 = spec.hidden_dim;
        l.w1 = 0;
        l.b1 = l.w1 + static_cast<std::size_t>(l.out1) * d;
        l.w2 = l.b1 + static_cast<std::size_t>(l.out1);
        l.b2 = l.w2 + static_cast<std::size_t>(spec.num_classes) * static_cast<std::size_t>(spec.hidden_dim);
        l.total = l.b2 + static_cast<std::size_t>(spec.num_classes);
    }
    return l;
}

void check_params(const ModelSpec& spec, const ParamVector& params) {
    if (!(params.layout == spec)) {
        throw std::invalid_argument("params layout does not match model spec");
    }
    if (params.values.size() != param_count(spec)) {
        throw std::invalid_argument("params length does not match model spec");
    }
}

void check_batch(const ModelSpec& spec, Batch batch) {
    if (batch.empty()) throw std::invalid_argument("batch must be non-empty");
    for (const Example& ex : batch) {
        if (ex.features.size() != static_cast<std::size_t>(spec.input_dim)) {
            throw std::invalid_argument("example feature length does not match model input_dim");
        }
    }
}

// softmax probabilities of logits, numerically stabilized; returns the
// log-sum-exp so callers can form -log p without a second pass.
double softmax_in_place(std::vector<double>& z) {
    double z_max = -std::numeric_limits<double>::infinity();
    for (double v : z) z_max = std::max(z_max, v);
    double denom = 0.0;
    for (double& v : z) {
        v = std::exp(v - z_max);
        denom += v;
    }
    for (double& v : z) v /= denom;
    return z_max + std::log(denom);
}

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Per-example forward pass shared by loss/gradient/predict. Fills logits;
// for the MLP also fills hidden activations (post-activation).
void forward_one(const ModelSpec& spec, const Layout& l, const std::vector<double>& v,
                 std::span<const double> x, std::vector<double>& hidden,
                 std::vector<double>& logits) {
    const int d = spec.input_dim;
    if (spec.family == ModelFamily::LinearSoftmax) {
        for (int c = 0; c < spec.num_classes; ++c) {
            const double* row = v.data() + l.w1 + static_cast<std::size_t>(c) * d;
            double s = v[l.b1 + c];
            for (int j = 0; j < d; ++j) s += row[j] * x[j];
            logits[c] = s;
        }
        return;
    }
    const int h = spec.hidden_dim;
    for (int i = 0; i < h; ++i) {
        const double* row = v.data() + l.w1 + static_cast<std::size_t>(i) * d;
        double s = v[l.b1 + i];
        for (int j = 0; j < d; ++j) s += row[j] * x[j];
        hidden[i] = spec.activation == Activation::Sigmoid ? sigmoid(s) : std::max(0.0, s);
    }
    for (int c = 0; c < spec.num_classes; ++c) {
        const double* row = v.data() + l.w2 + static_cast<std::size_t>(c) * h;
        double s = v[l.b2 + c];
        for (int i = 0; i < h; ++i) s += row[i] * hidden[i];
        logits[c] = s;
    }
}

}  // namespace

ModelSpec make_linear_softmax(int input_dim, int num_classes) {
    ModelSpec spec;
    spec.family = ModelFamily::LinearSoftmax;
    spec.input_dim = input_dim;
    spec.num_classes = num_classes;
    validate_spec(spec);
    return spec;
}

ModelSpec make_mlp(int input_dim, int hidden_dim, int num_classes, Activation activation) {
    ModelSpec spec;
    spec.family = ModelFamily::Mlp1Hidden;
    spec.input_dim = input_dim;
    spec.num_classes = num_classes;
    spec.hidden_dim = hidden_dim;
    spec.activation = activation;
    validate_spec(spec);
    return spec;
}

void validate_spec(const ModelSpec& spec) {
    if (spec.input_dim <= 0 || spec.num_classes <= 0) {
        throw std::invalid_argument("model spec dimensions must be positive");
    }
    if (spec.family == ModelFamily::Mlp1Hidden && spec.hidden_dim <= 0) {
        throw std::invalid_argument("mlp hidden_dim must be positive");
    }
}

std::size_t param_count(const ModelSpec& spec) {
    return layout_of(spec).total;
}

ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
    validate_spec(spec);
    const Layout l = layout_of(spec);
    ParamVector p{spec, std::vector<double>(l.total, 0.0)};
    Rng rng(stream_seed(seed, stream_tag::kInitParams));

    const double scale1 = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
    for (std::size_t i = l.w1; i < l.b1; ++i) p.values[i] = rng.normal(0.0, scale1);
    // b1 stays zero
    if (spec.family == ModelFamily::Mlp1Hidden) {
        const double scale2 = 1.0 / std::sqrt(static_cast<double>(spec.hidden_dim));
        for (std::size_t i = l.w2; i < l.b2; ++i) p.values[i] = rng.normal(0.0, scale2);
        // b2 stays zero
    }
    return p;
}

ParamVector zeros_like(const ModelSpec& spec) {
    return ParamVector{spec, std::vector<double>(param_count(spec), 0.0)};
}

std::vector<double> forward_logits(const ModelSpec& spec, const ParamVector& params,
                                   std::span<const double> features) {
    check_params(spec, params);
    if (features.size() != static_cast<std::size_t>(spec.input_dim)) {
        throw std::invalid_argument("feature length does not match model input_dim");
    }
    const Layout l = layout_of(spec);
    std::vector<double> hidden(spec.family == ModelFamily::Mlp1Hidden ? spec.hidden_dim : 0);
    std::vector<double> logits(spec.num_classes);
    forward_one(spec, l, params.values, features, hidden, logits);
    return logits;
}

double loss(const ModelSpec& spec, const ParamVector& params, Batch batch) {
    check_params(spec, params);
    check_batch(spec, batch);
    const Layout l = layout_of(spec);
    std::vector<double> hidden(spec.family == ModelFamily::Mlp1Hidden ? spec.hidden_dim : 0);
    std::vector<double> logits(spec.num_classes);
    double total = 0.0;
    for (const Example& ex : batch) {
        forward_one(spec, l, params.values, ex.features, hidden, logits);
        const double z_y = logits[ex.label];
        const double lse = softmax_in_place(logits);
        total += lse - z_y;
    }
    return total / static_cast<double>(batch.size());
}

double loss_and_gradient(const ModelSpec& spec, const ParamVector& params, Batch batch,
                         ParamVector& grad_out) {
    check_params(spec, params);
    check_batch(spec, batch);
    const Layout l = layout_of(spec);
    grad_out.layout = spec;
    grad_out.values.assign(l.total, 0.0);
    std::vector<double>& g = grad_out.values;

    const int d = spec.input_dim;
    const int C = spec.num_classes;
    const bool mlp = spec.family == ModelFamily::Mlp1Hidden;
    const int h = mlp ? spec.hidden_dim : 0;
    std::vector<double> hidden(h);
    std::vector<double> logits(C);
    std::vector<double> g_hidden(h);
    double total = 0.0;

    for (const Example& ex : batch) {
        forward_one(spec, l, params.values, ex.features, hidden, logits);
        const double z_y = logits[ex.label];
        const double lse = softmax_in_place(logits);  // logits now hold probabilities
        total += lse - z_y;
        logits[ex.label] -= 1.0;  // dL/dz

        if (!mlp) {
            for (int c = 0; c < C; ++c) {
                const double delta = logits[c];
                g[l.b1 + c] += delta;
                double* grow = g.data() + l.w1 + static_cast<std::size_t>(c) * d;
                for (int j = 0; j < d; ++j) grow[j] += delta * ex.features[j];
            }
            continue;
        }

        for (int i = 0; i < h; ++i) g_hidden[i] = 0.0;
        for (int c = 0; c < C; ++c) {
            const double delta = logits[c];
            g[l.b2 + c] += delta;
            double* grow = g.data() + l.w2 + static_cast<std::size_t>(c) * h;
            const double* wrow = params.values.data() + l.w2 + static_cast<std::size_t>(c) * h;
            for (int i = 0; i < h; ++i) {
                grow[i] += delta * hidden[i];
                g_hidden[i] += delta * wrow[i];
            }
        }
        for (int i = 0; i < h; ++i) {
            double dact;
            if (spec.activation == Activation::Sigmoid) {
                dact = hidden[i] * (1.0 - hidden[i]);
            } else {
                dact = hidden[i] > 0.0 ? 1.0 : 0.0;
            }
            const double delta = g_hidden[i] * dact;
            g[l.b1 + i] += delta;
            double* grow = g.data() + l.w1 + static_cast<std::size_t>(i) * d;
            for (int j = 0; j < d; ++j) grow[j] += delta * ex.features[j];
        }
    }

    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (double& v : g) v *= inv_n;
    return total * inv_n;
}

ParamVector gradient(const ModelSpec& spec, const ParamVector& params, Batch batch) {
    ParamVector grad;
    loss_and_gradient(spec, params, batch, grad);
    return grad;
}

int predict(const ModelSpec& spec, const ParamVector& params, std::span<const double> features) {
    const std::vector<double> logits = forward_logits(spec, params, features);
    int best = 0;
    double best_val = logits[0];
    for (int c = 1; c < spec.num_classes; ++c) {
        if (logits[c] > best_val) {  // strict: ties keep the lowest index
            best_val = logits[c];
            best = c;
        }
    }
    return best;
}

double evaluate_accuracy(const ModelSpec& spec, const ParamVector& params,
                         std::span<const Example> dataset) {
    if (dataset.empty()) throw std::invalid_argument("evaluate_accuracy: dataset must be non-empty");
    check_params(spec, params);
    const Layout l = layout_of(spec);
    std::vector<double> hidden(spec.family == ModelFamily::Mlp1Hidden ? spec.hidden_dim : 0);
    std::vector<double> logits(spec.num_classes);
    std::size_t correct = 0;
    for (const Example& ex : dataset) {
        if (ex.features.size() != static_cast<std::size_t>(spec.input_dim)) {
            throw std::invalid_argument("example feature length does not match model input_dim");
        }
        forward_one(spec, l, params.values, ex.features, hidden, logits);
        int best = 0;
        double best_val = logits[0];
        for (int c = 1; c < spec.num_classes; ++c) {
            if (logits[c] > best_val) {
                best_val = logits[c];
                best = c;
            }
        }
        if (best == ex.label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

void check_same_layout(const ParamVector& a, const ParamVector& b) {
    if (!(a.layout == b.layout) || a.values.size() != b.values.size()) {
        throw std::invalid_argument("parameter vectors have mismatched layouts");
    }
}

ParamVector add(const ParamVector& a, const ParamVector& b) {
    check_same_layout(a, b);
    ParamVector out = a;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += b.values[i];
    return out;
}

ParamVector subtract(const ParamVector& a, const ParamVector& b) {
    check_same_layout(a, b);
    ParamVector out = a;
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] -= b.values[i];
    return out;
}

ParamVector scale(const ParamVector& a, double factor) {
    ParamVector out = a;
    for (double& v : out.values) v *= factor;
    return out;
}

void axpy_in_place(ParamVector& a, double factor, const ParamVector& b) {
    check_same_layout(a, b);
    for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] += factor * b.values[i];
}

ParamVector weighted_sum(const std::vector<ParamVector>& vectors,
                         const std::vector<double>& weights) {
    if (vectors.empty() || vectors.size() != weights.size()) {
        throw std::invalid_argument("weighted_sum: need one weight per vector");
    }
    for (std::size_t k = 1; k < vectors.size(); ++k) check_same_layout(vectors[0], vectors[k]);
    ParamVector out = zeros_like(vectors[0].layout);
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < vectors.size(); ++k) {
            acc += weights[k] * vectors[k].values[i];
        }
        out.values[i] = acc;
    }
    return out;
}

double squared_norm(const ParamVector& a) {
    double acc = 0.0;
    for (double v : a.values) acc += v * v;
    return acc;
}

double squared_distance(const ParamVector& a, const ParamVector& b) {
    check_same_layout(a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        const double diff = a.values[i] - b.values[i];
        acc += diff * diff;
    }
    return acc;
}

bool all_finite(const ParamVector& a) {
    for (double v : a.values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace fedsim
