#include "fedsim/local_training.hpp"

#include <cmath>

namespace fedsim {

std::vector<std::vector<Example>> make_batches(const std::vector<Example>& data, int batch_size,
                                               Rng& rng) {
    if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    std::vector<std::vector<Example>> batches;
    const std::size_t n = data.size();
    const std::size_t bs = static_cast<std::size_t>(batch_size);
    for (std::size_t begin = 0; begin < n; begin += bs) {
        const std::size_t end = std::min(begin + bs, n);
        std::vector<Example> batch;
        batch.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) batch.push_back(data[order[i]]);
        batches.push_back(std::move(batch));
    }
    return batches;
}

LocalResult train_local(const ParamVector& start, const ClientDataset& data,
                        const LocalConfig& cfg, const ParamVector* anchor,
                        const ControlVariates* controls) {
    if (!(cfg.lr > 0.0)) throw std::invalid_argument("train_local: lr must be positive");
    if (cfg.epochs < 0) throw std::invalid_argument("train_local: epochs must be >= 0");
    if (!all_finite(start)) throw std::invalid_argument("train_local: start params not finite");
    if (cfg.prox_mu > 0.0 && anchor == nullptr) {
        throw std::invalid_argument("train_local: prox_mu > 0 requires an anchor");
    }
    if (anchor != nullptr) check_same_layout(start, *anchor);
    if (controls != nullptr) {
        check_same_layout(start, controls->c_global);
        check_same_layout(start, controls->c_local);
    }

    const ModelSpec& spec = start.layout;
    LocalResult result;
    result.params = start;
    ParamVector& w = result.params;
    ParamVector velocity = zeros_like(spec);
    ParamVector grad = zeros_like(spec);

    Rng rng(stream_seed(cfg.seed, 0x6c6f636cULL));  // "locl"
    const std::size_t dim = w.values.size();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto batches = make_batches(data.train, cfg.batch_size, rng);
        for (const auto& batch : batches) {
            loss_and_gradient(spec, w, batch, grad);

            double norm_sq = 0.0;
            for (double g : grad.values) norm_sq += g * g;
            result.max_grad_norm = std::max(result.max_grad_norm, std::sqrt(norm_sq));

            for (std::size_t i = 0; i < dim; ++i) {
                double g = grad.values[i];
                if (cfg.weight_decay != 0.0) g += cfg.weight_decay * w.values[i];
                if (cfg.prox_mu > 0.0) g += cfg.prox_mu * (w.values[i] - anchor->values[i]);
                if (controls != nullptr) {
                    g += controls->c_global.values[i] - controls->c_local.values[i];
                }
                const double v = cfg.momentum * velocity.values[i] + g;
                velocity.values[i] = v;
                w.values[i] -= cfg.lr * v;
            }
            ++result.steps_taken;
        }
        result.samples_seen += data.n_samples;
        if (!all_finite(w)) {
            throw DivergenceError("train_local: parameters diverged (non-finite values)");
        }
    }

    if (controls != nullptr && result.steps_taken > 0) {
        // Option-II control update: the communicated delta is
        // (start - final)/(lr * steps) - c_global; the client applies it to
        // its own c_k, the server folds the mean into c.
        ParamVector delta = subtract(start, w);
        const double inv = 1.0 / (cfg.lr * static_cast<double>(result.steps_taken));
        for (std::size_t i = 0; i < dim; ++i) {
            delta.values[i] = delta.values[i] * inv - controls->c_global.values[i];
        }
        result.control_delta = std::move(delta);
    }
    return result;
}

}  // namespace fedsim
