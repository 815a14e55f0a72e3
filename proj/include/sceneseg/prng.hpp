#pragma once

#include <cmath>
#include <cstdint>

// Portable random number generation.
//
// Every randomized path in this library draws from xoshiro256++ seeded through
// splitmix64, so a given seed reproduces the same byte stream on any platform
// with IEEE-754 doubles. Sub-streams are derived with mix_stream(seed, purpose,
// index): one fixed purpose id per sampling concern and one index per video,
// which keeps per-video generation independent and safe to parallelize.

namespace sceneseg {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Derives an independent stream seed from (master seed, purpose id, index).
inline std::uint64_t mix_stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
    std::uint64_t st = seed;
    std::uint64_t h = splitmix64_next(st);
    st = h ^ (purpose * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);
    h = splitmix64_next(st);
    st = h ^ (index * 0xD6E8FEB86659FD93ULL + 0xA0761D6478BD642FULL);
    return splitmix64_next(st);
}

// xoshiro256++ (Blackman & Vigna). State expanded from the seed via splitmix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t st = seed;
        for (auto& w : state_) w = splitmix64_next(st);
    }

    Rng(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index)
        : Rng(mix_stream(seed, purpose, index)) {}

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi) {
        const double u = uniform01();
        const int span = hi - lo + 1;
        int v = lo + static_cast<int>(u * span);
        return v > hi ? hi : v;
    }

    // Standard normal via Box-Muller; consumes two uniforms per pair of draws.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform01(); // (0, 1]
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Purpose ids for derived streams. Values are part of the reproducibility
// contract: changing them changes every generated corpus.
namespace stream_purpose {
constexpr std::uint64_t kScenes = 1;
constexpr std::uint64_t kLabels = 2;
constexpr std::uint64_t kShots = 3;
constexpr std::uint64_t kOutputNoise = 4;
constexpr std::uint64_t kFeatures = 5;
constexpr std::uint64_t kSignatures = 6;
constexpr std::uint64_t kPerturb = 7;
constexpr std::uint64_t kWeights = 8;
constexpr std::uint64_t kFit = 9;
} // namespace stream_purpose

} // namespace sceneseg
