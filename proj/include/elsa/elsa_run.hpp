#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "elsa/checkpoint.hpp"
#include "elsa/errors.hpp"
#include "elsa/gmp.hpp"
#include "elsa/lsbpack.hpp"
#include "elsa/network.hpp"
#include "elsa/param_set.hpp"
#include "elsa/sparsity.hpp"
#include "elsa/training.hpp"

namespace elsa {

// ---------------------------------------------------------------------------
// Counter algebra. Counter values live in {1..T+1}: t = first level at
// which the weight froze, T+1 = never frozen. Masks are nested across a
// run, so the counter is a lossless summary of all of them.
// ---------------------------------------------------------------------------

inline Mask mask_from_counter(const Counter& counter, std::uint16_t t,
                              std::uint16_t t_levels) {
    if (t < 1 || t > t_levels)
        throw ConfigError("level " + std::to_string(t) + " out of range [1, " +
                          std::to_string(t_levels) + "]");
    Mask mask(counter.size());
    for (std::size_t i = 0; i < counter.size(); ++i)
        mask[i] = counter[i] <= t ? 0 : 1;
    return mask;
}

// Counter-based extraction: keep weight i bit-identically iff it froze at
// or before level t; everything else becomes exact 0.0. Non-prunable
// parameters are copied through.
inline ParamSet extract_level(const ParamSet& dense, const Counter& counter,
                              std::uint16_t t, std::uint16_t t_levels) {
    if (t < 1 || t > t_levels)
        throw ConfigError("level " + std::to_string(t) + " out of range [1, " +
                          std::to_string(t_levels) + "]");
    if (counter.size() != dense.prunable_count())
        throw DimensionError("counter length mismatch");
    ParamSet sparse = dense;
    sparse.for_each_prunable([&](std::size_t i, float& v) {
        if (counter[i] > t) v = 0.0f;
    });
    return sparse;
}

// ---------------------------------------------------------------------------
// Single ELSA step: sparsify -> freeze -> stamp -> densify.
// ---------------------------------------------------------------------------

enum class Sparsifier { OneShot, Gmp };

struct GmpPhase {
    double start_frac = 0.2;        // prune phase inside the run, as step fractions
    double end_frac = 0.8;
    double prune_every_epochs = 1.0;

    GmpConfig resolve(std::size_t n, const TrainConfig& cfg) const {
        const std::size_t per_epoch = detail::steps_per_epoch(n, cfg.batch_size);
        const std::size_t total = per_epoch * cfg.epochs;
        GmpConfig g;
        g.start_step = static_cast<std::size_t>(start_frac * static_cast<double>(total));
        g.end_step = std::max<std::size_t>(
            g.start_step + 1,
            static_cast<std::size_t>(end_frac * static_cast<double>(total)));
        g.prune_every = std::max<std::size_t>(
            1, static_cast<std::size_t>(prune_every_epochs *
                                        static_cast<double>(per_epoch)));
        return g;
    }
};

struct ElsaStepConfig {
    Sparsifier sparsifier = Sparsifier::OneShot;
    TrainConfig sparsifier_train; // GMP's training run
    GmpPhase gmp;
    TrainConfig densify;          // masked training after the freeze
    bool densify_after = true;    // false between GMP levels
};

// stamp_hook(params, newly_frozen, level): lsbpack stamping, runs right
// after the freeze so everything downstream sees stamped values.
using StampHook =
    std::function<void(ParamSet&, const std::vector<std::size_t>&, std::uint16_t)>;

// post_freeze(params, mask): runs on the stamped sparse network, before
// densification; snapshots and per-level batchnorm stats are taken here.
using PostFreezeHook = std::function<void(const ParamSet&, const Mask&)>;

inline ParamSet elsa_step(const Network& net, ParamSet params, Mask& mask,
                          const SparsitySpec& spec, const LabeledData& data,
                          const ElsaStepConfig& cfg, std::uint16_t level,
                          const StampHook& stamp_hook,
                          const PostFreezeHook& post_freeze = nullptr) {
    const Mask before = mask;
    if (cfg.sparsifier == Sparsifier::Gmp) {
        const GmpConfig g = cfg.gmp.resolve(data.n, cfg.sparsifier_train);
        params = gmp_run(net, std::move(params), mask, spec, data,
                         cfg.sparsifier_train, g);
    } else {
        const KeepSet keep = select(params, mask, spec);
        apply_keepset(params, keep, mask);
    }
    std::vector<std::size_t> newly_frozen;
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (before[i] == 1 && mask[i] == 0) newly_frozen.push_back(i);
    if (stamp_hook) stamp_hook(params, newly_frozen, level);
    if (post_freeze) post_freeze(params, mask);
    if (cfg.densify_after)
        params = train(net, std::move(params), mask, data, cfg.densify);
    return params;
}

// ---------------------------------------------------------------------------
// Multi-level run
// ---------------------------------------------------------------------------

struct LevelSchedule {
    std::vector<SparsitySpec> specs; // strictly decreasing sparsity

    void check() const {
        if (specs.empty()) throw ConfigError("schedule has no levels");
        if (specs.size() > 255) throw ConfigError("at most 255 levels supported");
        for (std::size_t i = 0; i < specs.size(); ++i) {
            specs[i].check();
            if (i > 0 &&
                specs[i].nominal_sparsity() >= specs[i - 1].nominal_sparsity())
                throw ConfigError("sparsity levels must strictly decrease "
                                  "(violated at level " + std::to_string(i + 1) + ")");
        }
    }

    std::uint16_t t_levels() const {
        return static_cast<std::uint16_t>(specs.size());
    }
};

struct SparseSnapshot {
    std::uint16_t level = 0;
    std::string digest;           // prunable payload, post-stamp
    BatchNormStats stats;         // computed on the sparse network
    std::size_t nonzeros = 0;     // equals the level's keep budget
    std::optional<ParamSet> image; // full bit-image, verification runs only
};

struct EmbeddingResult {
    ParamSet dense;            // finalized: free weights carry lsb 0
    Counter counter;
    std::uint16_t t_levels = 0;
    std::uint8_t tau = 0;
    std::vector<SparseSnapshot> levels;
    BatchNormStats dense_stats;
    std::string dense_digest;
};

struct MultiLevelConfig {
    Sparsifier sparsifier = Sparsifier::Gmp;
    TrainConfig sparsifier_train;
    GmpPhase gmp;
    TrainConfig densify;
    std::uint64_t seed = 1;        // per-level seeds derive from this
    bool keep_snapshots = false;   // retain full sparse images (verification)
    bool stamping = true;          // lsbpack hook; off only for analysis runs
};

// Observer for tests: sees each level's recorded mask without the
// orchestrator retaining it.
using LevelObserver =
    std::function<void(std::uint16_t level, const Mask&, const KeepSet*)>;

// Algorithm: thread (params, mask) through T ELSA steps, maintain the
// counter N += M per level, stamp newly frozen weights with their level,
// snapshot each sparse network, then finalize free-weight LSBs. Holds one
// mask and one counter regardless of T.
inline EmbeddingResult multi_level(const Network& net, ParamSet params,
                                   const LevelSchedule& schedule,
                                   const LabeledData& data,
                                   const MultiLevelConfig& cfg,
                                   const LevelObserver& observer = nullptr) {
    schedule.check();
    const std::uint16_t t_levels = schedule.t_levels();
    const std::uint8_t tau = tau_for(t_levels);
    const std::size_t d = params.prunable_count();

    Mask mask(d, 1);
    Counter counter(d, 1);
    StampLedger ledger(d);

    EmbeddingResult result;
    result.t_levels = t_levels;
    result.tau = tau;
    result.levels.reserve(t_levels);

    for (std::uint16_t t = 1; t <= t_levels; ++t) {
        ElsaStepConfig step_cfg;
        step_cfg.sparsifier = cfg.sparsifier;
        step_cfg.sparsifier_train = cfg.sparsifier_train;
        step_cfg.gmp = cfg.gmp;
        step_cfg.densify = cfg.densify;
        step_cfg.sparsifier_train.seed = Rng::derive(cfg.seed, "sparsify", t);
        step_cfg.densify.seed = Rng::derive(cfg.seed, "densify", t);
        // GMP has densification built into the next level's run; only
        // one-shot sparsification needs the explicit densify per level.
        step_cfg.densify_after = cfg.sparsifier == Sparsifier::OneShot;

        SparseSnapshot snap;
        snap.level = t;
        const StampHook hook =
            !cfg.stamping
                ? StampHook(nullptr)
                : [&](ParamSet& p, const std::vector<std::size_t>& newly,
                      std::uint16_t lvl) { stamp_level(p, ledger, newly, lvl, tau); };
        const PostFreezeHook post = [&](const ParamSet& sparse, const Mask& m) {
            snap.digest = prunable_digest(sparse);
            snap.stats = compute_bn_stats(net, sparse, data.features, data.n);
            snap.stats.level = t;
            std::size_t nz = 0;
            sparse.for_each_prunable([&](std::size_t, float v) {
                if (v != 0.0f) ++nz;
            });
            snap.nonzeros = nz;
            if (cfg.keep_snapshots) snap.image = sparse;
            if (observer) observer(t, m, nullptr);
        };

        try {
            params = elsa_step(net, std::move(params), mask, schedule.specs[t - 1],
                               data, step_cfg, t, hook, post);
        } catch (const InfeasibleError& e) {
            throw InfeasibleError("level " + std::to_string(t) + ": " + e.what());
        }

        for (std::size_t i = 0; i < d; ++i) counter[i] += mask[i];
        result.levels.push_back(std::move(snap));
    }

    if (cfg.sparsifier == Sparsifier::Gmp) {
        TrainConfig densify = cfg.densify;
        densify.seed = Rng::derive(cfg.seed, "densify-final");
        params = train(net, std::move(params), mask, data, densify);
    }

    if (cfg.stamping) finalize(params, counter, ledger, t_levels, tau);
    result.dense_stats = compute_bn_stats(net, params, data.features, data.n);
    result.dense_stats.level = 0;
    result.dense_digest = prunable_digest(params);
    result.dense = std::move(params);
    result.counter = std::move(counter);
    return result;
}

// Stored statistics lookup; level 0 means the final dense model.
inline const BatchNormStats& stats_for_level(const EmbeddingResult& result,
                                             int level) {
    if (level == 0) return result.dense_stats;
    if (level < 1 || level > result.t_levels)
        throw ConfigError("no stored statistics for level " + std::to_string(level));
    return result.levels[static_cast<std::size_t>(level) - 1].stats;
}

// Packs an embedding into the checkpoint layout: per-level batchnorm sets
// followed by the dense set.
inline PackedCheckpoint pack_result(const EmbeddingResult& result) {
    std::vector<BatchNormStats> sets;
    if (!result.dense_stats.layers.empty()) {
        sets.reserve(result.levels.size() + 1);
        for (const auto& snap : result.levels) sets.push_back(snap.stats);
        sets.push_back(result.dense_stats);
    }
    return make_checkpoint(result.dense, result.t_levels, result.tau,
                           std::move(sets));
}

} // namespace elsa
