// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

namespace csiloc {

using Rng = std::mt19937_64;

/// Derive an independent sub-seed for a named component from a root seed.
/// FNV-1a over the name, mixed into the root with a splitmix64 finalizer.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view component) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : component) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    std::uint64_t z = root + 0x9e3779b97f4a7c15ULL + h;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view component, std::uint64_t index) {
    return derive_seed(derive_seed(root, component) + index, "index");
}

/// Uniform double in [lo, hi). Implemented by hand because the standard distributions
/// are not bit-reproducible across library implementations.
inline double uniform(Rng& rng, double lo, double hi) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * u;
}

/// Standard normal via Box-Muller, reproducible across standard libraries.
inline double standard_normal(Rng& rng) {
    double u1 = uniform(rng, 0.0, 1.0);
    while (u1 <= 0.0) u1 = uniform(rng, 0.0, 1.0);
    const double u2 = uniform(rng, 0.0, 1.0);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    // rejection sampling keeps this unbiased and portable
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t v = rng();
    while (v >= limit) v = rng();
    return static_cast<std::size_t>(v % n);
}

/// Fisher-Yates permutation of 0..n-1.
inline std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
    return idx;
}

}  // namespace csiloc
