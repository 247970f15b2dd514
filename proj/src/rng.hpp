#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "types.hpp"

namespace dlove {

// Deterministic random source. We do not use <random> distributions because
// their output is implementation-defined; every draw here is fully specified
// so results reproduce bit-for-bit on any platform.
//
// State is xoshiro256++, seeded from a single 64-bit value via splitmix64.
class Rng {
public:
    explicit Rng(Seed seed);

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 bits of randomness.
    double uniform();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Standard normal via Box-Muller (two uniforms per draw, no cached spare).
    double normal();
    // Uniform in {0, 1}.
    int bit();
    // Uniform index in [0, n). n must be > 0.
    std::size_t index(std::size_t n);

    // Fisher-Yates using index(); stable given identical seed and input.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::swap(v[i], v[index(i + 1)]);
        }
    }

private:
    std::uint64_t s_[4];
};

// 64-bit FNV-1a, used for label hashing and content hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

// Derives an independent child seed from a parent seed and a label. Stages,
// per-item draws and per-network initializers all get their own stream this
// way, so changing one consumer never shifts another.
Seed derive_seed(Seed parent, std::string_view label);
Seed derive_seed(Seed parent, std::string_view label, std::uint64_t index);

} // namespace dlove
