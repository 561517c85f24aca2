#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <variant>

#include "elsa/errors.hpp"
#include "elsa/sparsity.hpp"
#include "elsa/training.hpp"

namespace elsa {

// Gradual magnitude pruning schedule: prune events every `prune_every`
// optimizer steps inside [start_step, end_step], ramping the sparsity
// along a cubic polynomial toward the final spec.
struct GmpConfig {
    std::size_t start_step = 0;
    std::size_t end_step = 0;
    std::size_t prune_every = 1;

    void check() const {
        if (start_step >= end_step)
            throw ConfigError("gmp: start_step must be < end_step");
        if (prune_every < 1) throw ConfigError("gmp: prune_every must be >= 1");
    }
};

// Cubic ramp: level(u) = final * (1 - (1 - u)^3) with u the clamped
// progress through the prune phase. Monotone nondecreasing in `step`.
inline double gmp_level_at(std::size_t step, const GmpConfig& cfg,
                           double final_level) {
    double u;
    if (step <= cfg.start_step) u = 0.0;
    else if (step >= cfg.end_step) u = 1.0;
    else
        u = static_cast<double>(step - cfg.start_step) /
            static_cast<double>(cfg.end_step - cfg.start_step);
    const double om = 1.0 - u;
    return final_level * (1.0 - om * om * om);
}

namespace detail {

// The spec with its sparsity level rescaled; N:M has no intermediate
// patterns, so its ramp jumps straight to the final pattern at the first
// event past the phase midpoint.
inline SparsitySpec scaled_spec(const SparsitySpec& spec, double level) {
    SparsitySpec out = spec;
    if (std::holds_alternative<GlobalSparsity>(spec.kind))
        out.kind = GlobalSparsity{level};
    else if (std::holds_alternative<UniformSparsity>(spec.kind))
        out.kind = UniformSparsity{level};
    return out;
}

} // namespace detail

// Trains while ramping toward `spec`, then fine-tunes the survivors and
// freezes the final pattern. Intermediate patterns are transient: the
// training mask only excludes previously frozen weights, and weights
// pruned mid-run are re-zeroed after every step so they may re-enter at a
// later event. Returns with `mask` frozen at the final pattern.
inline ParamSet gmp_run(const Network& net, ParamSet params, Mask& mask,
                        const SparsitySpec& spec, const LabeledData& data,
                        const TrainConfig& cfg, const GmpConfig& gmp) {
    gmp.check();
    const double final_level = spec.nominal_sparsity();
    if (final_level == 0.0) {
        // degenerate schedule: no pruning at all
        detail::run_epochs(net, params, mask, data, cfg, cfg.epochs,
                           [](std::size_t) {}, [](std::size_t) {});
        return params;
    }
    spec.check();

    bool have_pattern = false;
    KeepSet pattern;

    const auto prune_at = [&](std::size_t step) {
        double level = gmp_level_at(step, gmp, final_level);
        if (std::holds_alternative<NByM>(spec.kind)) {
            // no fractional N:M patterns; hold off until the ramp completes
            if (step < gmp.end_step) return;
            level = final_level;
        }
        if (level <= 0.0) return;
        pattern = select(params, mask, detail::scaled_spec(spec, level));
        have_pattern = true;
        zero_outside(params, pattern);
    };

    detail::run_epochs(
        net, params, mask, data, cfg, cfg.epochs,
        [&](std::size_t step) {
            const bool in_phase = step >= gmp.start_step && step <= gmp.end_step &&
                                  (step - gmp.start_step) % gmp.prune_every == 0;
            if (in_phase || step == gmp.end_step) prune_at(step);
        },
        [&](std::size_t) {
            if (have_pattern) zero_outside(params, pattern);
        });

    // Final selection is idempotent once the pattern is pinned: survivors
    // are the only nonzero learnable weights, so it re-derives the same
    // set. If the phase never fired (end_step beyond the run), this is the
    // single one-shot prune.
    pattern = select(params, mask, spec);
    apply_keepset(params, pattern, mask);
    return params;
}

} // namespace elsa
