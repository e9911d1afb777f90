#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace pgan {

// splitmix64 finalizer; used to derive independent seeds from (seed, tags...).
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, std::initializer_list<uint64_t> path) {
    uint64_t h = mix64(master);
    for (uint64_t p : path) h = mix64(h ^ p);
    return h;
}

// PCG32. Small, fast, and the whole state is two u64s, which keeps
// checkpointing and cross-platform reproducibility trivial.
class Rng {
public:
    Rng() { reseed(0x853c49e6748fea9bULL, 0xda3e39cb94b95bdbULL); }
    explicit Rng(uint64_t seed, uint64_t stream = 0) { reseed(seed, stream); }

    void reseed(uint64_t seed, uint64_t stream = 0) {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    uint32_t next_u32() {
        uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + inc_;
        uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
        uint32_t rot = static_cast<uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    uint64_t next_u64() {
        uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    // Unbiased integer in [0, n).
    uint32_t uniform_int(uint32_t n) {
        uint32_t threshold = (0u - n) % n;
        for (;;) {
            uint32_t r = next_u32();
            if (r >= threshold) return r % n;
        }
    }

    // [0, 1), 24 bits of mantissa.
    float uniform() { return static_cast<float>(next_u32() >> 8) * (1.0f / 16777216.0f); }

    // [lo, hi)
    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; draws exactly two uniforms per call so the stream position
    // is a pure function of the number of calls (no cached spare).
    float normal(float mean, float stddev) {
        double u1 = 1.0 - static_cast<double>(uniform());  // (0, 1]
        double u2 = static_cast<double>(uniform());
        double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * static_cast<float>(r * std::cos(2.0 * 3.14159265358979323846 * u2));
    }

    uint64_t state() const { return state_; }
    uint64_t inc() const { return inc_; }
    void set_raw(uint64_t state, uint64_t inc) {
        state_ = state;
        inc_ = inc;
    }

private:
    uint64_t state_;
    uint64_t inc_;
};

inline Rng derive_rng(uint64_t master, std::initializer_list<uint64_t> path) {
    uint64_t s = derive_seed(master, path);
    return Rng(s, mix64(s ^ 0x5851f42d4c957f2dULL));
}

}  // namespace pgan
