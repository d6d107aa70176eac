#pragma once

#include <cstdint>
#include <initializer_list>

namespace sgds {

// SplitMix64 finalizer (Steele, Lea, Flood 2014). Pinned so that seeded
// streams are identical on every platform and standard library.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

// Derive a stream key from a seed and a tuple of indices, e.g.
// (run seed, task, epoch, batch, sample).
std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept;

// Counter-based generator: the i-th output is splitmix64_mix(key + (i + 1) * gamma).
// This is exactly the SplitMix64 sequence for state = key.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

    std::uint64_t next_u64() noexcept {
        ++counter_;
        return splitmix64_mix(key_ + counter_ * kGoldenGamma);
    }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Unbiased integer in [0, bound) by rejection of the short low range.
    std::uint64_t below(std::uint64_t bound);

    // Standard normal via Box-Muller (one draw per call; the sine branch is discarded).
    double normal();

    bool bernoulli(double p) noexcept { return uniform() < p; }

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace sgds
