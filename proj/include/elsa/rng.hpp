#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace elsa {

// Deterministic random generator used for weight init and shuffles.
//
// Algorithm (fixed; results must reproduce across platforms):
//   - state seeding: splitmix64 applied four times to the 64-bit seed
//   - stream: xoshiro256** (Blackman/Vigna)
//   - uniform float: top 24 bits of next() scaled by 2^-24
//   - normal: Box-Muller on two uniform doubles (53-bit)
//   - shuffle: Fisher-Yates, j = next() % (i + 1)
//   - split(tag): child seed = mix(seed ^ fnv1a64(tag)), statistically
//     independent stream per tag
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
    }

    std::uint64_t next() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), exactly representable in float.
    float uniform() {
        return static_cast<float>(next() >> 40) * 0x1.0p-24f;
    }

    float uniform(float lo, float hi) {
        return lo + (hi - lo) * uniform();
    }

    // Standard normal via Box-Muller; consumes two draws.
    float normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = static_cast<double>(next() >> 11) * 0x1.0p-53;
        const double u2 = static_cast<double>(next() >> 11) * 0x1.0p-53;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = static_cast<float>(r * std::sin(a));
        have_spare_ = true;
        return static_cast<float>(r * std::cos(a));
    }

    // Bounded draw; modulo bias is irrelevant here, determinism is not.
    std::uint64_t below(std::uint64_t n) { return next() % n; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Derive an independent child seed for a named phase.
    static std::uint64_t derive(std::uint64_t seed, std::string_view tag,
                                std::uint64_t index = 0) {
        std::uint64_t h = 0xcbf29ce484222325ull; // FNV-1a 64 offset basis
        for (const char c : tag) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ull;
        }
        std::uint64_t s = seed ^ h ^ (index * 0x9e3779b97f4a7c15ull);
        return splitmix64(s);
    }

    static std::uint64_t splitmix64(std::uint64_t& state) {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4]{};
    float spare_ = 0.0f;
    bool have_spare_ = false;
};

} // namespace elsa
