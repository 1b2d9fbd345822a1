#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

namespace cforb::detail {

// std::uniform_int_distribution / std::normal_distribution produce
// implementation-defined sequences; these helpers keep seeded output identical
// across standard libraries.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t uniform_below(std::mt19937_64& g, std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below: n must be > 0");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = g();
  } while (x >= limit);
  return x % n;
}

/// Uniform double in [0, 1).
inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform_range(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

/// Standard normal via Box-Muller; one cached value per generator is avoided
/// on purpose so draws map 1:1 to generator calls in a fixed order.
inline double gaussian(std::mt19937_64& g) {
  double u1;
  do {
    u1 = uniform01(g);
  } while (u1 <= 0.0);
  const double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// k distinct indices from [0, n), in draw order.
inline std::vector<std::uint32_t> sample_distinct(std::mt19937_64& g, std::uint32_t n,
                                                  std::uint32_t k) {
  if (k > n) throw std::invalid_argument("sample_distinct: k > n");
  std::vector<std::uint32_t> out;
  out.reserve(k);
  while (out.size() < k) {
    const auto idx = static_cast<std::uint32_t>(uniform_below(g, n));
    bool seen = false;
    for (const auto v : out) {
      if (v == idx) {
        seen = true;
        break;
      }
    }
    if (!seen) out.push_back(idx);
  }
  return out;
}

}  // namespace cforb::detail
