#include "kgsynth/rng.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace kgsynth {

Rng substream_from_key(std::uint64_t seed, std::span<const std::uint64_t> key) {
    std::vector<std::uint32_t> words;
    words.reserve(2 * (key.size() + 1));
    auto push = [&](std::uint64_t v) {
        words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
        words.push_back(static_cast<std::uint32_t>(v >> 32));
    };
    push(seed);
    for (auto k : key) push(k);
    std::seed_seq seq(words.begin(), words.end());
    return Rng(seq);
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = Rng::max() - (Rng::max() % n + 1) % n;
    std::uint64_t r = rng();
    while (r > limit) r = rng();
    return r % n;
}

double standard_normal(Rng& rng) {
    // One value per call; the sine branch is discarded so the draw count per
    // normal is fixed at two uniforms.
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace kgsynth
