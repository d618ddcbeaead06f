#pragma once

#include <cstdint>
#include <random>

namespace wfic {

/// SplitMix64 finalizer; used only to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seeded random source. Streams derived from (seed, stream index) are
/// independent, so path-level work can be split across threads without
/// changing results.
class RandomState {
public:
    explicit RandomState(std::uint64_t seed, std::uint64_t stream = 0)
        : engine_(splitmix64(splitmix64(seed) ^ splitmix64(~stream))) {}

    /// Uniform on the open interval (0, 1), 53-bit resolution.
    double uniform() {
        for (;;) {
            const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
            if (u > 0.0) return u;
        }
    }

    double normal() { return normal_(engine_); }

    /// Fair sign in {-1, +1}.
    int sign() { return (engine_() >> 63) ? 1 : -1; }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace wfic
