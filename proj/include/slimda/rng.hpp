#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace slimda {

using Rng = std::mt19937_64;

/// Independent generator for a named stream ("data", "models", "init", "search", ...)
/// derived deterministically from one root seed.
Rng make_stream(std::uint64_t root_seed, std::string_view name);

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Uniform integer in [lo, hi].
inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

} // namespace slimda
