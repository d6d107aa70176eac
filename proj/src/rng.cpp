#include "sgds/rng.hpp"

#include "sgds/errors.hpp"

#include <cmath>
#include <numbers>

namespace sgds {

std::uint64_t derive_key(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
    std::uint64_t h = splitmix64_mix(seed ^ 0x5347445353454544ULL);
    for (std::uint64_t v : path) {
        h = splitmix64_mix(h + kGoldenGamma + splitmix64_mix(v + kGoldenGamma));
    }
    return h;
}

std::uint64_t CounterRng::below(std::uint64_t bound) {
    require(bound > 0, "CounterRng::below: bound must be positive");
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold) return r % bound;
    }
}

double CounterRng::normal() {
    // u1 in (0, 1] keeps the log finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace sgds
