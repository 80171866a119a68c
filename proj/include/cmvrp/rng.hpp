#pragma once

#include <cstdint>

namespace cmvrp {

// SplitMix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seed of the independent stream `index` under `seed`.
constexpr std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t index) noexcept {
    return splitmix64_mix(splitmix64_mix(seed) ^ (index * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL));
}

/// SplitMix64 generator. Every mapping to doubles or bounded integers is
/// defined here rather than through <random> distributions, whose outputs
/// are implementation specific.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit constexpr Rng(std::uint64_t seed) noexcept : state_(seed) {}

    constexpr Rng(std::uint64_t seed, std::uint64_t stream) noexcept : state_(derive_stream(seed, stream)) {}

    constexpr std::uint64_t next() noexcept {
        state_ += 0x9e3779b97f4a7c15ULL;
        return splitmix64_mix(state_);
    }

    constexpr std::uint64_t operator()() noexcept { return next(); }

    static constexpr std::uint64_t min() noexcept { return 0; }
    static constexpr std::uint64_t max() noexcept { return ~std::uint64_t{0}; }

    // Uniform on [0, 1) with 53 random bits.
    constexpr double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // Uniform on the integers [lo, hi], unbiased (Lemire's multiply-shift with rejection).
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
        const auto range = static_cast<std::uint64_t>(hi - lo) + 1;
        if (range == 0) return static_cast<std::int64_t>(next());
        auto product = static_cast<unsigned __int128>(next()) * range;
        auto low = static_cast<std::uint64_t>(product);
        if (low < range) {
            const std::uint64_t threshold = (0 - range) % range;
            while (low < threshold) {
                product = static_cast<unsigned __int128>(next()) * range;
                low = static_cast<std::uint64_t>(product);
            }
        }
        return lo + static_cast<std::int64_t>(product >> 64);
    }

private:
    std::uint64_t state_;
};

}  // namespace cmvrp
