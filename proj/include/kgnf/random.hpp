#pragma once

// Reproducible per-task random streams: each (seed, index) pair gets its own
// generator so results do not depend on scheduling.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace kgnf {

inline std::uint64_t splitmix64(std::uint64_t x)
{
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `keys...` under a global seed.
inline std::uint64_t stream_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys)
{
  std::uint64_t h = splitmix64(seed);
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys)
{
  return std::mt19937_64(stream_seed(seed, keys));
}

/// Uniform double in [0, 1) built from the top 53 bits; stable across
/// standard library implementations, unlike uniform_real_distribution.
inline double uniform01(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

/// Standard normal via Box-Muller on uniform01; also implementation independent.
inline double standard_normal(std::mt19937_64& rng)
{
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace kgnf
