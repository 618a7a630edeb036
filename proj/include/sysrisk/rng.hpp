#pragma once

#include <cmath>
#include <cstdint>

namespace sysrisk {

/// splitmix64 step: advances the state and returns one 64-bit output.
/// This is the only generator in the project, so results are reproducible
/// across platforms and thread counts within a build.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from (seed, index).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t s = seed;
    const std::uint64_t h = splitmix64(s);
    s ^= index + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    return splitmix64(s);
}

/// Seed of the RNG stream owned by one simulated path.
inline std::uint64_t path_seed(std::uint64_t base_seed, std::uint64_t path_index) {
    return mix_seed(base_seed, path_index);
}

/// Deterministic uniform/normal stream: splitmix64 state, 53-bit uniforms,
/// normals via the Marsaglia polar method (the spare deviate is cached, so
/// consumption order is well defined).
class NormalRng {
public:
    explicit NormalRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() { return splitmix64(state_); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

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
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        has_spare_ = true;
        return u * m;
    }

private:
    std::uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace sysrisk
