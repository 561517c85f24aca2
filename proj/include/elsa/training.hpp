#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "elsa/errors.hpp"
#include "elsa/network.hpp"
#include "elsa/param_set.hpp"
#include "elsa/rng.hpp"

namespace elsa {

struct TrainConfig {
    float learning_rate = 0.1f;
    float momentum = 0.9f;
    bool nesterov = true;
    std::uint32_t epochs = 30;
    std::uint32_t batch_size = 32;
    float weight_decay = 5e-4f;
    float label_smoothing = 0.1f;
    std::uint64_t seed = 1;

    void check() const {
        if (learning_rate <= 0.0f) throw ConfigError("learning_rate must be > 0");
        if (momentum < 0.0f || momentum >= 1.0f)
            throw ConfigError("momentum must be in [0, 1)");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    }
};

// Momentum buffers: one flat buffer over the prunable space plus one per
// non-prunable entry. Weight decay applies to prunable weights only.
struct OptimizerState {
    std::vector<float> prunable;                   // length D
    std::vector<std::vector<float>> non_prunable;  // aligned to entries, empty if prunable

    static OptimizerState zeros_like(const ParamSet& ps) {
        OptimizerState s;
        s.prunable.assign(ps.prunable_count(), 0.0f);
        s.non_prunable.resize(ps.entries().size());
        for (std::size_t i = 0; i < ps.entries().size(); ++i)
            if (!ps.entries()[i].prunable)
                s.non_prunable[i].assign(ps.entries()[i].tensor.size(), 0.0f);
        return s;
    }
};

// One SGD-with-momentum step. Updates are multiplied by the mask, so a
// frozen weight's 32-bit pattern is untouched; weight decay is folded into
// the gradient before the mask, so frozen weights never decay.
inline void masked_sgd_step(ParamSet& params, const Gradients& grads,
                            OptimizerState& state, const TrainConfig& cfg,
                            const Mask& mask) {
    if (mask.size() != params.prunable_count())
        throw DimensionError("mask length does not match prunable count");
    if (state.prunable.size() != params.prunable_count())
        throw DimensionError("optimizer state does not match prunable count");

    const float mu = cfg.momentum;
    const float lr = cfg.learning_rate;

    std::size_t flat = 0;
    for (std::size_t ei = 0; ei < params.entries().size(); ++ei) {
        auto& entry = params.entries()[ei];
        const auto& g = grads.per_entry.at(ei);
        if (g.size() != entry.tensor.size())
            throw DimensionError("gradient size mismatch for " + entry.name);
        if (entry.prunable) {
            for (std::size_t k = 0; k < g.size(); ++k, ++flat) {
                if (mask[flat] == 0) continue;
                float& w = entry.tensor.values[k];
                const float grad = g[k] + cfg.weight_decay * w;
                float& v = state.prunable[flat];
                v = mu * v + grad;
                const float step = cfg.nesterov ? grad + mu * v : v;
                w -= lr * step;
            }
        } else {
            auto& v = state.non_prunable[ei];
            for (std::size_t k = 0; k < g.size(); ++k) {
                float& w = entry.tensor.values[k];
                v[k] = mu * v[k] + g[k];
                const float step = cfg.nesterov ? g[k] + mu * v[k] : v[k];
                w -= lr * step;
            }
        }
    }
}

namespace detail {

// Shared minibatch loop. Shuffle order is a pure function of cfg.seed.
// `before_step` and `after_step` receive the 0-based global step index;
// both may mutate params (GMP pruning hooks ride here). Using the same
// driver for plain training and GMP keeps their RNG streams identical.
template <typename Before, typename After>
void run_epochs(const Network& net, ParamSet& params, const Mask& mask,
                const LabeledData& data, const TrainConfig& cfg,
                std::uint32_t epochs, Before&& before_step, After&& after_step) {
    cfg.check();
    if (data.n == 0) throw DataError("training data is empty");
    OptimizerState state = OptimizerState::zeros_like(params);
    Rng rng(cfg.seed);
    std::vector<std::size_t> order(data.n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    std::size_t step = 0;
    std::vector<float> bx;
    std::vector<std::int32_t> by;
    for (std::uint32_t e = 0; e < epochs; ++e) {
        rng.shuffle(order);
        for (std::size_t pos = 0; pos < data.n; pos += cfg.batch_size, ++step) {
            const std::size_t count = std::min<std::size_t>(cfg.batch_size, data.n - pos);
            bx.resize(count * data.dim);
            by.resize(count);
            for (std::size_t r = 0; r < count; ++r) {
                const std::size_t src = order[pos + r];
                std::copy_n(data.features.data() + src * data.dim, data.dim,
                            bx.data() + r * data.dim);
                by[r] = data.labels[src];
            }
            before_step(step);
            Batch batch{&bx, &by, count, data.dim};
            const Gradients grads = backward(net, params, batch);
            masked_sgd_step(params, grads, state, cfg, mask);
            after_step(step);
        }
    }
}

inline std::size_t steps_per_epoch(std::size_t n, std::uint32_t batch_size) {
    return (n + batch_size - 1) / batch_size;
}

} // namespace detail

// Masked training over shuffled minibatches; the densify subroutine.
// Frozen entries come back bit-identical; optimizer state starts fresh.
inline ParamSet train(const Network& net, ParamSet params, const Mask& mask,
                      const LabeledData& data, const TrainConfig& cfg) {
    detail::run_epochs(net, params, mask, data, cfg, cfg.epochs,
                       [](std::size_t) {}, [](std::size_t) {});
    return params;
}

} // namespace elsa
