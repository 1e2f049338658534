#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace canet {

// Deterministic RNG wrapper. std::mt19937_64 is bit-specified by the
// standard, but the std distributions are not, so sampling is done by hand
// here to keep every stream reproducible across compilers.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0,1), consumes exactly one engine draw.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive range, consumes exactly one engine draw.
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller without the spare cache so the draw count stays predictable.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 gen_;
};

// splitmix64 finalizer; used to derive independent seed streams.
inline std::uint64_t mix_u64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a_64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Seed for the (tag, index) stream of a run: independent streams allow
// episodes to be generated in any order or concurrently.
inline std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view tag, std::uint64_t index) {
    return mix_u64(mix_u64(global_seed ^ fnv1a_64(tag)) + index);
}

}  // namespace canet
