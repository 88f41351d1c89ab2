#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>

namespace kgsynth {

using Rng = std::mt19937_64;

// Top-level stream tags. Every random quantity in the pipeline is drawn from
// a substream keyed by (seed, tag, indices...) so that unrelated consumers
// never share state.
enum class Stream : std::uint64_t {
    KgGen = 1,
    Cohort = 2,
    Init = 3,
    Data = 4,
    Time = 5,
    Noise = 6,
    Sample = 7,
    Length = 8,
    Timestamp = 9,
    Eval = 10,
    Shadow = 11,
    Classifier = 12,
};

Rng substream_from_key(std::uint64_t seed, std::span<const std::uint64_t> key);

template <class... Ix>
Rng substream(std::uint64_t seed, Stream tag, Ix... indices) {
    const std::array<std::uint64_t, 1 + sizeof...(Ix)> key{
        static_cast<std::uint64_t>(tag), static_cast<std::uint64_t>(indices)...};
    return substream_from_key(seed, key);
}

// Uniform draw on [0, 1) built from the raw 64-bit output. Unlike
// std::uniform_real_distribution this is specified bit-for-bit.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform integer in [0, n) by rejection; portable across standard libraries.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

// Standard normal via Box-Muller on uniform01 draws; portable and stateless.
double standard_normal(Rng& rng);

}  // namespace kgsynth
