#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "elsa/errors.hpp"
#include "elsa/param_set.hpp"

namespace elsa {

// ---------------------------------------------------------------------------
// Sparsity targets
// ---------------------------------------------------------------------------

struct GlobalSparsity {
    double level = 0.0; // fraction of pool weights to zero, in (0, 1)
};

struct UniformSparsity {
    double level = 0.0; // per-layer fraction, in (0, 1)
};

struct NByM {
    std::uint32_t n = 0;
    std::uint32_t m = 0; // keep n per consecutive group of m, 1 <= n < m
};

struct SparsitySpec {
    std::variant<GlobalSparsity, UniformSparsity, NByM> kind;
    std::set<std::string> exclusions; // parameter names kept out of the pruning pool

    void check() const {
        if (const auto* g = std::get_if<GlobalSparsity>(&kind)) {
            if (!(g->level > 0.0 && g->level < 1.0))
                throw ConfigError("global sparsity level must be in (0, 1)");
        } else if (const auto* u = std::get_if<UniformSparsity>(&kind)) {
            if (!(u->level > 0.0 && u->level < 1.0))
                throw ConfigError("uniform sparsity level must be in (0, 1)");
        } else if (const auto* nm = std::get_if<NByM>(&kind)) {
            if (!(nm->n >= 1 && nm->n < nm->m))
                throw ConfigError("N:M pattern requires 1 <= n < m");
        }
    }

    // Nominal zero fraction over the pruning pool.
    double nominal_sparsity() const {
        if (const auto* g = std::get_if<GlobalSparsity>(&kind)) return g->level;
        if (const auto* u = std::get_if<UniformSparsity>(&kind)) return u->level;
        const auto& nm = std::get<NByM>(kind);
        return 1.0 - static_cast<double>(nm.n) / static_cast<double>(nm.m);
    }

    std::string describe() const {
        if (const auto* g = std::get_if<GlobalSparsity>(&kind))
            return "global " + std::to_string(g->level);
        if (const auto* u = std::get_if<UniformSparsity>(&kind))
            return "uniform " + std::to_string(u->level);
        const auto& nm = std::get<NByM>(kind);
        return std::to_string(nm.n) + ":" + std::to_string(nm.m);
    }
};

// ---------------------------------------------------------------------------
// Scores and keep sets
// ---------------------------------------------------------------------------

// Frozen weights dominate every comparison; exact-zero learnable weights
// lose every comparison, so "kept implies nonzero" holds by construction.
inline constexpr float kFrozenScore = std::numeric_limits<float>::max();
inline constexpr float kZeroScore = std::numeric_limits<float>::lowest();

using ScoreVector = std::vector<float>;

// Flat indices to retain and freeze. Sorted ascending; everything outside
// is zeroed by apply_keepset.
struct KeepSet {
    std::vector<std::size_t> indices;

    bool contains(std::size_t i) const {
        return std::binary_search(indices.begin(), indices.end(), i);
    }
};

inline ScoreVector magnitude_scores(const ParamSet& params, const Mask& mask) {
    if (mask.size() != params.prunable_count())
        throw DimensionError("mask length does not match prunable count");
    ScoreVector scores(params.prunable_count());
    params.for_each_prunable([&](std::size_t i, float v) {
        if (mask[i] == 0) scores[i] = kFrozenScore;
        else if (v == 0.0f) scores[i] = kZeroScore;
        else scores[i] = std::fabs(v);
    });
    return scores;
}

namespace detail {

// Flat indices covered by the excluded parameter names. Unknown or
// non-prunable names are ignored (biases and batchnorm parameters are
// excluded structurally and never enter the flat space).
inline std::vector<bool> exclusion_flags(const ParamSet& params,
                                         const std::set<std::string>& exclusions) {
    std::vector<bool> excluded(params.prunable_count(), false);
    for (const auto& name : exclusions) {
        if (!params.has(name)) continue;
        const std::size_t e = params.entry_index(name);
        if (!params.entries()[e].prunable) continue;
        const auto [lo, hi] = params.flat_range(e);
        for (std::size_t i = lo; i < hi; ++i) excluded[i] = true;
    }
    return excluded;
}

// Deterministic top-k among `candidates` by (score desc, index asc).
// Zero-scored (kZeroScore) entries are unselectable: if fewer than k
// candidates remain, all of them are taken.
inline void take_top_k(const ScoreVector& scores,
                       std::vector<std::size_t>& candidates, std::size_t k,
                       std::vector<std::size_t>& out) {
    const auto better = [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    candidates.erase(std::remove_if(candidates.begin(), candidates.end(),
                                    [&](std::size_t i) { return scores[i] == kZeroScore; }),
                     candidates.end());
    if (k >= candidates.size()) {
        out.insert(out.end(), candidates.begin(), candidates.end());
        return;
    }
    std::nth_element(candidates.begin(), candidates.begin() + k, candidates.end(), better);
    out.insert(out.end(), candidates.begin(), candidates.begin() + k);
}

inline std::size_t keep_count(double level, std::size_t pool_size) {
    return static_cast<std::size_t>(
        std::llround((1.0 - level) * static_cast<double>(pool_size)));
}

} // namespace detail

// Global top-K by score over the non-excluded pool. Keeps all frozen pool
// indices plus the largest-score learnable ones; ties go to the lowest
// flat index. Excluded parameters are retained wholesale: they join the
// keepset so the first freeze pins them into every sparse subnetwork.
inline KeepSet select_topk_global(const ParamSet& params, const ScoreVector& scores,
                                  const GlobalSparsity& spec,
                                  const std::set<std::string>& exclusions) {
    if (scores.size() != params.prunable_count())
        throw DimensionError("score vector length mismatch");
    const auto excluded = detail::exclusion_flags(params, exclusions);

    std::vector<std::size_t> pool;
    pool.reserve(scores.size());
    std::size_t frozen_in_pool = 0;
    KeepSet keep;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (excluded[i]) {
            keep.indices.push_back(i);
            continue;
        }
        pool.push_back(i);
        if (scores[i] == kFrozenScore) ++frozen_in_pool;
    }
    const std::size_t k = detail::keep_count(spec.level, pool.size());
    if (k < frozen_in_pool)
        throw InfeasibleError(
            "target sparsity " + std::to_string(spec.level) + " keeps " +
            std::to_string(k) + " weights but " + std::to_string(frozen_in_pool) +
            " are already frozen; levels must strictly decrease");
    detail::take_top_k(scores, pool, k, keep.indices);
    std::sort(keep.indices.begin(), keep.indices.end());
    return keep;
}

// Per-layer top-k: each non-excluded prunable tensor keeps
// round((1-level)*size) of its own weights, same tie rule.
inline KeepSet select_topk_uniform(const ParamSet& params, const ScoreVector& scores,
                                   const UniformSparsity& spec,
                                   const std::set<std::string>& exclusions) {
    if (scores.size() != params.prunable_count())
        throw DimensionError("score vector length mismatch");
    const auto excluded = detail::exclusion_flags(params, exclusions);

    KeepSet keep;
    for (const std::size_t e : params.prunable_entries()) {
        const auto [lo, hi] = params.flat_range(e);
        if (lo < hi && excluded[lo]) {
            for (std::size_t i = lo; i < hi; ++i) keep.indices.push_back(i);
            continue;
        }
        std::vector<std::size_t> pool;
        pool.reserve(hi - lo);
        std::size_t frozen = 0;
        for (std::size_t i = lo; i < hi; ++i) {
            pool.push_back(i);
            if (scores[i] == kFrozenScore) ++frozen;
        }
        const std::size_t k = detail::keep_count(spec.level, pool.size());
        if (k < frozen)
            throw InfeasibleError("uniform sparsity infeasible for layer " +
                                  params.entries()[e].name + ": keep " +
                                  std::to_string(k) + " < frozen " +
                                  std::to_string(frozen));
        detail::take_top_k(scores, pool, k, keep.indices);
    }
    std::sort(keep.indices.begin(), keep.indices.end());
    return keep;
}

// N:M selection: within each consecutive group of m weights along the
// innermost axis, keep the n largest-magnitude entries; frozen entries are
// always kept, ties go to the lowest offset. A trailing remainder group of
// r weights keeps ceil(n*r/m).
inline KeepSet select_nm(const ParamSet& params, const Mask& mask,
                         const NByM& spec,
                         const std::set<std::string>& exclusions) {
    if (mask.size() != params.prunable_count())
        throw DimensionError("mask length does not match prunable count");
    const auto excluded = detail::exclusion_flags(params, exclusions);
    const ScoreVector scores = magnitude_scores(params, mask);

    KeepSet keep;
    for (const std::size_t e : params.prunable_entries()) {
        const auto [lo, hi] = params.flat_range(e);
        if (lo < hi && excluded[lo]) {
            for (std::size_t i = lo; i < hi; ++i) keep.indices.push_back(i);
            continue;
        }
        const std::size_t row = params.entries()[e].tensor.innermost_dim();
        for (std::size_t start = lo; start < hi; start += row) {
            for (std::size_t g = 0; g < row; g += spec.m) {
                const std::size_t glen = std::min<std::size_t>(spec.m, row - g);
                const std::size_t want =
                    glen == spec.m
                        ? spec.n
                        : static_cast<std::size_t>(
                              (static_cast<std::uint64_t>(spec.n) * glen + spec.m - 1) /
                              spec.m);
                std::vector<std::size_t> group;
                group.reserve(glen);
                std::size_t frozen = 0;
                for (std::size_t i = 0; i < glen; ++i) {
                    group.push_back(start + g + i);
                    if (scores[start + g + i] == kFrozenScore) ++frozen;
                }
                if (frozen > want)
                    throw InfeasibleError(
                        "N:M pattern " + std::to_string(spec.n) + ":" +
                        std::to_string(spec.m) + " infeasible in " +
                        params.entries()[e].name + ": a group holds " +
                        std::to_string(frozen) + " frozen weights");
                detail::take_top_k(scores, group, want, keep.indices);
            }
        }
    }
    std::sort(keep.indices.begin(), keep.indices.end());
    return keep;
}

inline KeepSet select(const ParamSet& params, const Mask& mask,
                      const SparsitySpec& spec) {
    spec.check();
    if (const auto* g = std::get_if<GlobalSparsity>(&spec.kind))
        return select_topk_global(params, magnitude_scores(params, mask), *g,
                                  spec.exclusions);
    if (const auto* u = std::get_if<UniformSparsity>(&spec.kind))
        return select_topk_uniform(params, magnitude_scores(params, mask), *u,
                                   spec.exclusions);
    return select_nm(params, mask, std::get<NByM>(spec.kind), spec.exclusions);
}

// Zeroes every prunable weight outside the keepset and freezes the
// keepset: mask becomes the indicator of "not kept". Kept weights and
// non-prunable parameters are bit-identical to the input.
inline void apply_keepset(ParamSet& params, const KeepSet& keep, Mask& mask) {
    if (mask.size() != params.prunable_count())
        throw DimensionError("mask length does not match prunable count");
    if (!std::is_sorted(keep.indices.begin(), keep.indices.end()))
        throw ContractError("keepset indices must be sorted");
    for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i] == 0 && !keep.contains(i))
            throw ContractError("keepset is missing frozen index " + std::to_string(i));
    std::size_t cursor = 0;
    params.for_each_prunable([&](std::size_t i, float& v) {
        if (cursor < keep.indices.size() && keep.indices[cursor] == i) {
            ++cursor;
            mask[i] = 0;
        } else {
            v = 0.0f;
            mask[i] = 1;
        }
    });
}

// Zeroes prunable weights outside the keepset without touching the mask;
// GMP applies transient patterns this way between prune events.
inline void zero_outside(ParamSet& params, const KeepSet& keep) {
    std::size_t cursor = 0;
    params.for_each_prunable([&](std::size_t i, float& v) {
        if (cursor < keep.indices.size() && keep.indices[cursor] == i) ++cursor;
        else v = 0.0f;
    });
}

} // namespace elsa
