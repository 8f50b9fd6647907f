#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace mapex {

// All randomness flows through mt19937_64 seeded via splitmix64 mixing and
// the bounded/unit draws below. std::uniform_int_distribution and friends are
// implementation-defined, so they are never used; results must be identical
// across platforms and runs.

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Folds any number of 64-bit parts into one seed.
inline std::uint64_t seed_mix(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x853c49e6748fea9bULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ p);
  return h;
}

inline std::mt19937_64 make_rng(std::initializer_list<std::uint64_t> parts) {
  return std::mt19937_64(seed_mix(parts));
}

// Unbiased draw in [0, n) by rejection.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = n * (UINT64_MAX / n);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// Uniform double in [0, 1).
inline double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename T>
void shuffle_inplace(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(bounded(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

// Index draw with probability proportional to weights. Zero-weight entries
// occupy empty intervals and are never returned. Caller guarantees the total
// is positive.
inline std::size_t weighted_index(std::span<const double> cumulative,
                                  std::mt19937_64& rng) {
  const double total = cumulative.back();
  const double u = uniform_unit(rng) * total;
  std::size_t lo = 0, hi = cumulative.size() - 1;
  while (lo < hi) {
    std::size_t mid = (lo + hi) / 2;
    if (cumulative[mid] <= u) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  return lo;
}

inline std::vector<double> cumulative_sums(std::span<const double> weights) {
  std::vector<double> cum(weights.size());
  double run = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    run += weights[i];
    cum[i] = run;
  }
  return cum;
}

}  // namespace mapex
