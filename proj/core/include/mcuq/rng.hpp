#pragma once

#include <cmath>
#include <cstdint>

namespace mcuq {

// Deterministic, platform-independent random streams.
//
// xoshiro256** seeded through splitmix64, with substreams derived by mixing
// a stream id into the seed.  Distinct stream ids give statistically
// independent streams for the same master seed, which is what lets
// replications be farmed out to any number of workers while producing
// byte-identical results: replication r always consumes stream r, no matter
// which worker executes it.
//
// Uniforms take the top 53 bits; normals use the polar method.  Both avoid
// libm differences across platforms leaking into sampled trajectories
// (std::log/std::sqrt are correctly-rounded-enough in practice and identical
// across the toolchains we target).

inline uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class Rng {
public:
    Rng() : Rng(0, 0) {}

    Rng(uint64_t seed, uint64_t stream_id) {
        // Mix the stream id through splitmix64 before combining so that
        // consecutive ids land far apart in seed space.
        uint64_t sid = stream_id;
        uint64_t mixed = splitmix64(sid) ^ 0x6a09e667f3bcc909ULL;
        uint64_t s = seed ^ mixed;
        for (auto& word : state_) word = splitmix64(s);
        has_spare_ = false;
        spare_ = 0.0;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform on [0, 1): 53 random bits scaled by 2^-53.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on (0, 1]; safe as a log() argument.
    double uniform_pos() { return 1.0 - uniform(); }

    // Standard normal via the polar (Marsaglia) method.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    // Integer in [0, n) without modulo bias (Lemire rejection).
    uint64_t below(uint64_t n) {
        if (n == 0) return 0;
        uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        uint64_t l = static_cast<uint64_t>(m);
        if (l < n) {
            const uint64_t t = (0ULL - n) % n;
            while (l < t) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * n;
                l = static_cast<uint64_t>(m);
            }
        }
        return static_cast<uint64_t>(m >> 64);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t state_[4];
    bool has_spare_;
    double spare_;
};

} // namespace mcuq
