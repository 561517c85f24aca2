#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "elsa/errors.hpp"
#include "elsa/param_set.hpp"
#include "elsa/rng.hpp"

namespace elsa {

// ---------------------------------------------------------------------------
// Architecture description. Parameters live in a ParamSet keyed by
// "<layer index>.<field>"; the network itself is stateless.
// ---------------------------------------------------------------------------

struct Affine {
    std::uint32_t in = 0;
    std::uint32_t out = 0;
    bool has_bias = true;
};

struct BatchNorm {
    std::uint32_t dim = 0;
};

struct Relu {};

struct SoftmaxCrossEntropyHead {
    std::uint32_t classes = 0;
    float label_smoothing = 0.0f;
};

using Layer = std::variant<Affine, BatchNorm, Relu, SoftmaxCrossEntropyHead>;

struct Batch {
    // features: n rows of dim columns, row-major; labels: n class indices.
    const std::vector<float>* features = nullptr;
    const std::vector<std::int32_t>* labels = nullptr;
    std::size_t n = 0;
    std::size_t dim = 0;
};

// Inference-time batchnorm statistics, one (mean, var) pair per BatchNorm
// layer in network order. `level` tags which sparsity level they serve;
// 0 means the full (dense) model.
struct BatchNormStats {
    struct PerLayer {
        std::vector<float> mean;
        std::vector<float> var; // population variance, >= 0
    };
    std::vector<PerLayer> layers;
    int level = 0;
};

class Network {
public:
    Network() = default;

    explicit Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
        validate();
    }

    const std::vector<Layer>& layers() const { return layers_; }

    std::uint32_t input_dim() const { return input_dim_; }
    std::uint32_t classes() const { return classes_; }

    std::size_t batchnorm_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_)
            if (std::holds_alternative<BatchNorm>(l)) ++n;
        return n;
    }

    static std::string param_name(std::size_t layer, const char* field) {
        return std::to_string(layer) + "." + field;
    }

    // Fresh parameters: He-uniform affine weights, zero biases, unit
    // batchnorm scale. Weight tensors are {out, in} row-major, so the
    // innermost dimension is the fan-in.
    ParamSet init_params(Rng& rng) const {
        ParamSet ps;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (const auto* a = std::get_if<Affine>(&layers_[i])) {
                Tensor w({a->out, a->in});
                const float limit = std::sqrt(6.0f / static_cast<float>(a->in));
                for (auto& v : w.values) v = rng.uniform(-limit, limit);
                ps.add(param_name(i, "weight"), std::move(w), /*prunable=*/true);
                if (a->has_bias)
                    ps.add(param_name(i, "bias"), Tensor({a->out}), false);
            } else if (const auto* b = std::get_if<BatchNorm>(&layers_[i])) {
                ps.add(param_name(i, "gamma"), Tensor({b->dim}, 1.0f), false);
                ps.add(param_name(i, "beta"), Tensor({b->dim}), false);
            }
        }
        return ps;
    }

private:
    void validate() {
        if (layers_.empty()) throw DimensionError("network has no layers");
        std::uint32_t dim = 0;
        bool seen_head = false;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (seen_head) throw DimensionError("head must be the last layer");
            if (const auto* a = std::get_if<Affine>(&layers_[i])) {
                if (a->in == 0 || a->out == 0)
                    throw DimensionError("affine layer with zero dimension");
                if (i == 0) input_dim_ = a->in;
                else if (dim != a->in)
                    throw DimensionError("affine input dim mismatch at layer " +
                                         std::to_string(i));
                dim = a->out;
            } else if (const auto* b = std::get_if<BatchNorm>(&layers_[i])) {
                if (i == 0) input_dim_ = dim = b->dim;
                else if (dim != b->dim)
                    throw DimensionError("batchnorm dim mismatch at layer " +
                                         std::to_string(i));
            } else if (std::holds_alternative<Relu>(layers_[i])) {
                if (i == 0) throw DimensionError("network cannot start with relu");
            } else if (const auto* h = std::get_if<SoftmaxCrossEntropyHead>(&layers_[i])) {
                if (h->classes != dim)
                    throw DimensionError("head class count does not match layer dim");
                if (h->label_smoothing < 0.0f || h->label_smoothing >= 1.0f)
                    throw DimensionError("label smoothing must be in [0, 1)");
                seen_head = true;
                classes_ = h->classes;
            }
        }
        if (!seen_head) throw DimensionError("network must end with a head");
    }

    std::vector<Layer> layers_;
    std::uint32_t input_dim_ = 0;
    std::uint32_t classes_ = 0;
};

// ---------------------------------------------------------------------------
// Forward / backward. Weights and activations are float32; loss and
// batchnorm moments accumulate in double. BN uses population variance
// with epsilon inside the square root.
// ---------------------------------------------------------------------------

inline constexpr float kBnEpsilon = 1e-5f;

namespace detail {

inline void check_finite(const std::vector<float>& v, const char* where) {
    for (const float x : v)
        if (!std::isfinite(x))
            throw NumericError(std::string("non-finite activation in ") + where);
}

struct BnCache {
    std::vector<float> mean;    // per feature
    std::vector<float> inv_std; // 1/sqrt(var + eps)
    std::vector<float> xhat;    // normalized input, n x dim
    std::vector<float> var;     // population variance (without eps)
};

struct Trace {
    std::vector<std::vector<float>> inputs; // activation entering each layer
    std::vector<BnCache> bn;                // one per BatchNorm, network order
    std::vector<float> probs;               // softmax output, n x classes
    std::vector<float> logits;
    double loss = 0.0;
};

// mode: 0 = training (batch statistics), 1 = eval (provided stats)
inline Trace run_forward(const Network& net, const ParamSet& params,
                         const Batch& batch, int mode,
                         const BatchNormStats* stats, bool want_loss) {
    if (batch.n == 0) throw DataError("empty batch");
    if (batch.dim != net.input_dim())
        throw DimensionError("batch feature dim does not match network input");
    if (mode == 1 && net.batchnorm_count() > 0) {
        if (stats == nullptr || stats->layers.size() != net.batchnorm_count())
            throw DimensionError("eval mode requires batchnorm statistics");
    }

    Trace tr;
    std::vector<float> x = *batch.features;
    std::size_t dim = batch.dim;
    const std::size_t n = batch.n;
    std::size_t bn_index = 0;

    for (std::size_t li = 0; li < net.layers().size(); ++li) {
        tr.inputs.push_back(x);
        const Layer& layer = net.layers()[li];
        if (const auto* a = std::get_if<Affine>(&layer)) {
            const auto& w = params.tensor(Network::param_name(li, "weight")).values;
            const float* b = nullptr;
            if (a->has_bias)
                b = params.tensor(Network::param_name(li, "bias")).values.data();
            std::vector<float> y(n * a->out);
            for (std::size_t r = 0; r < n; ++r) {
                const float* xr = x.data() + r * a->in;
                float* yr = y.data() + r * a->out;
                for (std::uint32_t o = 0; o < a->out; ++o) {
                    const float* wo = w.data() + static_cast<std::size_t>(o) * a->in;
                    float acc = b ? b[o] : 0.0f;
                    for (std::uint32_t k = 0; k < a->in; ++k) acc += wo[k] * xr[k];
                    yr[o] = acc;
                }
            }
            x = std::move(y);
            dim = a->out;
        } else if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
            const auto& gamma = params.tensor(Network::param_name(li, "gamma")).values;
            const auto& beta = params.tensor(Network::param_name(li, "beta")).values;
            BnCache cache;
            cache.mean.resize(bn->dim);
            cache.var.resize(bn->dim);
            cache.inv_std.resize(bn->dim);
            if (mode == 0) {
                for (std::uint32_t f = 0; f < bn->dim; ++f) {
                    double s = 0.0;
                    for (std::size_t r = 0; r < n; ++r) s += x[r * dim + f];
                    const double mu = s / static_cast<double>(n);
                    double sq = 0.0;
                    for (std::size_t r = 0; r < n; ++r) {
                        const double d = x[r * dim + f] - mu;
                        sq += d * d;
                    }
                    cache.mean[f] = static_cast<float>(mu);
                    cache.var[f] = static_cast<float>(sq / static_cast<double>(n));
                }
            } else {
                const auto& pl = stats->layers[bn_index];
                if (pl.mean.size() != bn->dim)
                    throw DimensionError("batchnorm stats dim mismatch");
                cache.mean = pl.mean;
                cache.var = pl.var;
            }
            for (std::uint32_t f = 0; f < bn->dim; ++f)
                cache.inv_std[f] = 1.0f / std::sqrt(cache.var[f] + kBnEpsilon);
            cache.xhat.resize(n * bn->dim);
            for (std::size_t r = 0; r < n; ++r)
                for (std::uint32_t f = 0; f < bn->dim; ++f) {
                    const float xh = (x[r * dim + f] - cache.mean[f]) * cache.inv_std[f];
                    cache.xhat[r * dim + f] = xh;
                    x[r * dim + f] = gamma[f] * xh + beta[f];
                }
            tr.bn.push_back(std::move(cache));
            ++bn_index;
        } else if (std::holds_alternative<Relu>(layer)) {
            for (auto& v : x) v = v > 0.0f ? v : 0.0f;
        } else if (const auto* h = std::get_if<SoftmaxCrossEntropyHead>(&layer)) {
            tr.logits = x;
            tr.probs.resize(n * h->classes);
            double loss_sum = 0.0;
            for (std::size_t r = 0; r < n; ++r) {
                const float* lr = x.data() + r * h->classes;
                float* pr = tr.probs.data() + r * h->classes;
                float mx = lr[0];
                for (std::uint32_t c = 1; c < h->classes; ++c)
                    mx = std::max(mx, lr[c]);
                float denom = 0.0f;
                for (std::uint32_t c = 0; c < h->classes; ++c) {
                    pr[c] = std::exp(lr[c] - mx);
                    denom += pr[c];
                }
                for (std::uint32_t c = 0; c < h->classes; ++c) pr[c] /= denom;
                if (want_loss) {
                    const std::int32_t label = (*batch.labels)[r];
                    if (label < 0 || static_cast<std::uint32_t>(label) >= h->classes)
                        throw DataError("label out of range");
                    const float ls = h->label_smoothing;
                    const float off = ls / static_cast<float>(h->classes);
                    double ce = 0.0;
                    for (std::uint32_t c = 0; c < h->classes; ++c) {
                        const float target =
                            off + (static_cast<std::uint32_t>(label) == c ? 1.0f - ls : 0.0f);
                        // clamp avoids log(0) on a saturated softmax
                        const float p = std::max(pr[c], 1e-30f);
                        ce -= static_cast<double>(target) * std::log(static_cast<double>(p));
                    }
                    loss_sum += ce;
                }
            }
            if (want_loss) tr.loss = loss_sum / static_cast<double>(n);
        }
        detail::check_finite(x, "layer output");
    }
    return tr;
}

} // namespace detail

struct ForwardResult {
    float loss = 0.0f;
    std::vector<float> logits; // n x classes
};

// Training mode uses batch statistics; eval mode uses `stats`.
enum class Mode { Training, Eval };

inline ForwardResult forward(const Network& net, const ParamSet& params,
                             const Batch& batch, Mode mode,
                             const BatchNormStats* stats = nullptr) {
    auto tr = detail::run_forward(net, params, batch, mode == Mode::Eval ? 1 : 0,
                                  stats, batch.labels != nullptr);
    ForwardResult r;
    r.loss = static_cast<float>(tr.loss);
    r.logits = std::move(tr.logits);
    if (batch.labels && !std::isfinite(r.loss)) throw NumericError("non-finite loss");
    return r;
}

// Gradient container congruent to a ParamSet: one tensor-shaped buffer per
// learnable entry (all entries here are learnable).
struct Gradients {
    std::vector<std::vector<float>> per_entry;

    static Gradients zeros_like(const ParamSet& ps) {
        Gradients g;
        g.per_entry.reserve(ps.entries().size());
        for (const auto& e : ps.entries())
            g.per_entry.emplace_back(e.tensor.size(), 0.0f);
        return g;
    }
};

// Mean-loss gradient for every parameter (prunable and not).
inline Gradients backward(const Network& net, const ParamSet& params,
                          const Batch& batch) {
    auto tr = detail::run_forward(net, params, batch, 0, nullptr, true);
    Gradients grads = Gradients::zeros_like(params);

    const std::size_t n = batch.n;
    const auto& layers = net.layers();

    // dL/d(current activation), built from the head backwards.
    std::vector<float> dx;
    std::size_t bn_index = net.batchnorm_count();

    for (std::size_t li = layers.size(); li-- > 0;) {
        const Layer& layer = layers[li];
        if (const auto* h = std::get_if<SoftmaxCrossEntropyHead>(&layer)) {
            dx.assign(n * h->classes, 0.0f);
            const float ls = h->label_smoothing;
            const float off = ls / static_cast<float>(h->classes);
            const float inv_n = 1.0f / static_cast<float>(n);
            for (std::size_t r = 0; r < n; ++r) {
                const std::int32_t label = (*batch.labels)[r];
                for (std::uint32_t c = 0; c < h->classes; ++c) {
                    const float target =
                        off + (static_cast<std::uint32_t>(label) == c ? 1.0f - ls : 0.0f);
                    dx[r * h->classes + c] =
                        (tr.probs[r * h->classes + c] - target) * inv_n;
                }
            }
        } else if (const auto* a = std::get_if<Affine>(&layer)) {
            const auto& x = tr.inputs[li];
            const auto& w = params.tensor(Network::param_name(li, "weight")).values;
            auto& gw = grads.per_entry[params.entry_index(Network::param_name(li, "weight"))];
            for (std::size_t r = 0; r < n; ++r) {
                const float* xr = x.data() + r * a->in;
                const float* dyr = dx.data() + r * a->out;
                for (std::uint32_t o = 0; o < a->out; ++o) {
                    const float d = dyr[o];
                    if (d == 0.0f) continue;
                    float* gwo = gw.data() + static_cast<std::size_t>(o) * a->in;
                    for (std::uint32_t k = 0; k < a->in; ++k) gwo[k] += d * xr[k];
                }
            }
            if (a->has_bias) {
                auto& gb = grads.per_entry[params.entry_index(Network::param_name(li, "bias"))];
                for (std::size_t r = 0; r < n; ++r)
                    for (std::uint32_t o = 0; o < a->out; ++o)
                        gb[o] += dx[r * a->out + o];
            }
            std::vector<float> dprev(n * a->in, 0.0f);
            for (std::size_t r = 0; r < n; ++r) {
                const float* dyr = dx.data() + r * a->out;
                float* dpr = dprev.data() + r * a->in;
                for (std::uint32_t o = 0; o < a->out; ++o) {
                    const float d = dyr[o];
                    if (d == 0.0f) continue;
                    const float* wo = w.data() + static_cast<std::size_t>(o) * a->in;
                    for (std::uint32_t k = 0; k < a->in; ++k) dpr[k] += d * wo[k];
                }
            }
            dx = std::move(dprev);
        } else if (const auto* bn = std::get_if<BatchNorm>(&layer)) {
            --bn_index;
            const auto& cache = tr.bn[bn_index];
            const auto& gamma = params.tensor(Network::param_name(li, "gamma")).values;
            auto& ggamma = grads.per_entry[params.entry_index(Network::param_name(li, "gamma"))];
            auto& gbeta = grads.per_entry[params.entry_index(Network::param_name(li, "beta"))];
            const std::uint32_t dim = bn->dim;
            std::vector<float> dprev(n * dim);
            for (std::uint32_t f = 0; f < dim; ++f) {
                double sum_dy_xhat = 0.0, sum_dy = 0.0;
                for (std::size_t r = 0; r < n; ++r) {
                    const float dy = dx[r * dim + f];
                    sum_dy += dy;
                    sum_dy_xhat += static_cast<double>(dy) * cache.xhat[r * dim + f];
                }
                ggamma[f] += static_cast<float>(sum_dy_xhat);
                gbeta[f] += static_cast<float>(sum_dy);
                // batch statistics backprop, population variance convention
                const double inv_n_d = 1.0 / static_cast<double>(n);
                const double m_dy = sum_dy * inv_n_d;
                const double m_dy_xhat = sum_dy_xhat * inv_n_d;
                for (std::size_t r = 0; r < n; ++r) {
                    const double dxhat = static_cast<double>(dx[r * dim + f]) * gamma[f];
                    const double term =
                        dxhat - static_cast<double>(gamma[f]) * m_dy -
                        static_cast<double>(gamma[f]) * m_dy_xhat * cache.xhat[r * dim + f];
                    dprev[r * dim + f] =
                        static_cast<float>(term * cache.inv_std[f]);
                }
            }
            dx = std::move(dprev);
        } else if (std::holds_alternative<Relu>(layer)) {
            const auto& x = tr.inputs[li];
            for (std::size_t i = 0; i < dx.size(); ++i)
                if (x[i] <= 0.0f) dx[i] = 0.0f;
        }
    }
    return grads;
}

// Per-BN-layer mean/variance of pre-normalization activations over the
// whole dataset (single full pass, labels never read). Population
// variance; deterministic for fixed inputs.
inline BatchNormStats compute_bn_stats(const Network& net, const ParamSet& params,
                                       const std::vector<float>& features,
                                       std::size_t n) {
    if (n == 0) throw DataError("compute_bn_stats: empty data");
    Batch batch;
    batch.features = &features;
    batch.labels = nullptr;
    batch.n = n;
    batch.dim = features.size() / n;
    auto tr = detail::run_forward(net, params, batch, 0, nullptr, false);
    BatchNormStats stats;
    stats.layers.reserve(tr.bn.size());
    for (const auto& c : tr.bn)
        stats.layers.push_back({c.mean, c.var});
    return stats;
}

struct LabeledData {
    std::vector<float> features; // n x dim row-major
    std::vector<std::int32_t> labels;
    std::size_t n = 0;
    std::size_t dim = 0;
    std::uint32_t classes = 0;
};

// Fraction of argmax-correct predictions; ties broken by lowest class
// index. Order independent.
inline double evaluate(const Network& net, const ParamSet& params,
                       const BatchNormStats& stats, const LabeledData& data) {
    if (data.n == 0) throw DataError("evaluate: empty data");
    Batch batch;
    batch.features = &data.features;
    batch.labels = nullptr;
    batch.n = data.n;
    batch.dim = data.dim;
    auto tr = detail::run_forward(net, params, batch, 1, &stats, false);
    const std::uint32_t classes = net.classes();
    std::size_t correct = 0;
    for (std::size_t r = 0; r < data.n; ++r) {
        const float* pr = tr.logits.data() + r * classes;
        std::uint32_t best = 0;
        for (std::uint32_t c = 1; c < classes; ++c)
            if (pr[c] > pr[best]) best = c;
        if (static_cast<std::int32_t>(best) == data.labels[r]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(data.n);
}

} // namespace elsa
