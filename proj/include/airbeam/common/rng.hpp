#pragma once

#include <complex>
#include <cstdint>
#include <random>

namespace airbeam {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the stream identified by (seed, a, b, c). Distinct tuples give
/// statistically independent generators.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                                    std::uint64_t c = 0) {
  return mix64(mix64(mix64(mix64(seed) ^ a) ^ b) ^ c);
}

inline Rng make_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return Rng(stream_seed(seed, a, b, c));
}

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

/// Circularly-symmetric CN(0, variance).
inline std::complex<double> complex_normal(Rng& rng, double variance) {
  const double s = std::sqrt(variance / 2.0);
  const double re = standard_normal(rng);
  const double im = standard_normal(rng);
  return {s * re, s * im};
}

}  // namespace airbeam
