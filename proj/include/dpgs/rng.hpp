// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace dpgs {

// PCG32: small deterministic generator, identical streams on every platform.
class Pcg32 {
public:
    explicit Pcg32(uint64_t seed = 0x853c49e6748fea9bULL, uint64_t seq = 0xda3e39cb94b95bdbULL) {
        state_ = 0u;
        inc_ = (seq << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    uint32_t next_u32() {
        const uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        const uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        const uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
    }

    // Uniform in [0, 1).
    double next_double() { return next_u32() * (1.0 / 4294967296.0); }

    uint32_t next_below(uint32_t bound) {
        // Debiased modulo; bound == 0 treated as full range.
        if (bound == 0) return next_u32();
        const uint32_t threshold = (-bound) % bound;
        for (;;) {
            const uint32_t r = next_u32();
            if (r >= threshold) return r % bound;
        }
    }

private:
    uint64_t state_;
    uint64_t inc_;
};

// splitmix64-style mixing for deriving per-pixel stream seeds from counters.
inline uint64_t mix_u64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline Pcg32 pixel_rng(uint64_t seed, uint64_t frame, uint64_t pixel_index) {
    const uint64_t a = mix_u64(seed ^ mix_u64(frame));
    const uint64_t b = mix_u64(a ^ mix_u64(pixel_index));
    return Pcg32(b, a ^ 0x2545f4914f6cdd1dULL);
}

} // namespace dpgs
