#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace plita::core {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic stream keyed by an ordered tuple, e.g. (seed, iteration, slot).
/// Streams with different keys are statistically independent.
Rng keyed_rng(std::initializer_list<std::uint64_t> keys);

// Portable distributions: the standard library's are implementation-defined,
// these give identical draws on every platform.
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
/// Uniform integer in [0, n).
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);
double normal(Rng& rng);
/// Normal(0, sigma) redrawn until |x| <= bound_sigmas * sigma.
double truncated_normal(Rng& rng, double sigma, double bound_sigmas = 2.0);

template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = uniform_index(rng, i);
    std::swap(first[static_cast<std::ptrdiff_t>(i - 1)], first[static_cast<std::ptrdiff_t>(j)]);
  }
}

}  // namespace plita::core
