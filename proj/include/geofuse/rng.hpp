#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace geofuse {

// Deterministic draws on top of std::mt19937_64. The standard pins the
// engine's output exactly, but not the <random> distributions, so every
// distribution used here is built from raw 64-bit draws to keep results
// bit-identical across compilers and standard libraries.

/// Uniform double in [0, 1) with 53 bits of precision.
inline double uniform_unit(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * (1.0 / 9007199254740992.0);
}

/// Uniform double in (0, 1].
inline double uniform_open_closed(std::mt19937_64& gen) {
  return static_cast<double>((gen() >> 11) + 1) * (1.0 / 9007199254740992.0);
}

/// Uniform double in [lo, hi).
inline double uniform_range(std::mt19937_64& gen, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(gen);
}

/// Unbiased uniform integer in [0, n) via rejection sampling.
inline std::uint64_t uniform_below(std::mt19937_64& gen, std::uint64_t n) {
  const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
  std::uint64_t x;
  do {
    x = gen();
  } while (x >= limit);
  return x % n;
}

/// Standard normal deviate via Box-Muller (stateless form; one value per
/// two uniform draws).
inline double normal_unit(std::mt19937_64& gen) {
  const double u1 = uniform_open_closed(gen);
  const double u2 = uniform_unit(gen);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

/// Seeded Fisher-Yates shuffle of [0, n) index order, applied to any
/// random-access container.
template <typename Container>
inline void shuffle_in_place(Container& items, std::mt19937_64& gen) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_below(gen, i));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace geofuse
