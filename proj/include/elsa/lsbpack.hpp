#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "elsa/errors.hpp"
#include "elsa/param_set.hpp"

namespace elsa {

// Number of low mantissa bits needed to store freeze steps 1..T (0 marks
// "free"): ceil(log2(T+1)).
inline std::uint8_t tau_for(std::uint16_t t_levels) {
    if (t_levels < 1 || t_levels > 255)
        throw ConfigError("level count must be in [1, 255], got " +
                          std::to_string(t_levels));
    return static_cast<std::uint8_t>(std::bit_width(t_levels));
}

inline std::uint32_t lsb_mask(std::uint8_t tau) {
    return tau == 0 ? 0u : ((1u << tau) - 1u);
}

// Overwrite the low tau bits of a 32-bit word with t; all other bits kept.
inline std::uint32_t stamp(std::uint32_t word, std::uint32_t t, std::uint8_t tau) {
    if (tau > 32 || (tau < 32 && t >= (1u << tau)))
        throw ContractError("stamp value " + std::to_string(t) +
                            " does not fit in " + std::to_string(tau) + " bits");
    return (word & ~lsb_mask(tau)) | t;
}

// Integer held in the low tau bits.
inline std::uint32_t read_lsb(std::uint32_t word, std::uint8_t tau) {
    return word & lsb_mask(tau);
}

// Tracks which flat indices were stamped at which level, so overlapping
// stamps are rejected and finalize can cross-check the counter.
class StampLedger {
public:
    explicit StampLedger(std::size_t d) : stamped_level_(d, 0) {}

    std::size_t size() const { return stamped_level_.size(); }

    std::uint16_t level_of(std::size_t i) const { return stamped_level_.at(i); }

    void record(const std::vector<std::size_t>& indices, std::uint16_t level) {
        if (level == 0) throw ContractError("stamp level must be >= 1");
        for (const auto i : indices) {
            if (stamped_level_.at(i) != 0)
                throw ContractError("index " + std::to_string(i) +
                                    " already stamped at level " +
                                    std::to_string(stamped_level_[i]));
            stamped_level_[i] = level;
        }
    }

private:
    std::vector<std::uint16_t> stamped_level_;
};

struct StampOutcome {
    std::size_t stamped = 0;
    std::size_t subnormal = 0; // |value| below 2^-100: perturbation bound voided
};

// Stamp level t into exactly the newly frozen weights. Previously stamped
// weights and everything else stay bit-identical. Targets must be nonzero:
// a zero word would silently change meaning under Eq-style extraction.
inline StampOutcome stamp_level(ParamSet& params, StampLedger& ledger,
                                const std::vector<std::size_t>& newly_frozen,
                                std::uint16_t level, std::uint8_t tau) {
    StampOutcome out;
    ledger.record(newly_frozen, level);
    for (const auto i : newly_frozen) {
        const std::uint32_t word = params.bits_flat(i);
        const float value = std::bit_cast<float>(word);
        if ((word << 1) == 0)
            throw ContractError("cannot stamp zero weight at flat index " +
                                std::to_string(i));
        if (std::isnan(value) || std::isinf(value))
            throw ContractError("cannot stamp non-finite weight at flat index " +
                                std::to_string(i));
        if (std::fabs(value) < 0x1.0p-100f) ++out.subnormal;
        params.set_bits_flat(i, stamp(word, level, tau));
        ++out.stamped;
    }
    return out;
}

// Clear the low tau bits of every never-frozen weight, marking it as not
// part of any sparse subnetwork, and verify stamped weights carry their
// counter value. Must run once, after the last densification.
inline void finalize(ParamSet& params, const Counter& counter,
                     const StampLedger& ledger, std::uint16_t t_levels,
                     std::uint8_t tau) {
    if (counter.size() != params.prunable_count() ||
        ledger.size() != params.prunable_count())
        throw DimensionError("counter/ledger length mismatch");
    params.for_each_prunable([&](std::size_t i, float& v) {
        std::uint32_t word = std::bit_cast<std::uint32_t>(v);
        if (counter[i] == t_levels + 1) {
            if (ledger.level_of(i) != 0)
                throw IntegrityError("free weight " + std::to_string(i) +
                                     " carries a stamp");
            v = std::bit_cast<float>(stamp(word, 0, tau));
        } else {
            if (ledger.level_of(i) != counter[i] ||
                read_lsb(word, tau) != counter[i])
                throw IntegrityError("stamp/counter mismatch at flat index " +
                                     std::to_string(i));
        }
    });
}

} // namespace elsa
