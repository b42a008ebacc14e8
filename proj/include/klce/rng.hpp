#pragma once

// Deterministic random streams. Every stochastic routine in the library
// derives a stream from (seed, stream_id) so that parallel execution and
// thread count cannot change the draws.

#include <cmath>
#include <cstdint>
#include <random>

namespace klce::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream for replicate `stream_id` of experiment `seed`.
inline std::mt19937_64 derive_stream(std::uint64_t seed, std::uint64_t stream_id) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(stream_id + 0x517cc1b727220a95ULL)));
}

// Uniform on [0, 1) with 53 random bits. std::uniform_real_distribution is
// not guaranteed identical across standard libraries; this is.
inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Uniform on (0, 1), never exactly 0.
inline double uniform01_open(std::mt19937_64& gen) {
  return (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
}

// Standard normal via Box-Muller. Two uniforms per draw; the sine branch is
// discarded so each call consumes a fixed amount of the stream.
inline double standard_normal(std::mt19937_64& gen) {
  const double u1 = uniform01_open(gen);
  const double u2 = uniform01(gen);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Uniform index in [0, n).
inline std::size_t uniform_index(std::mt19937_64& gen, std::size_t n) {
  std::size_t i = static_cast<std::size_t>(uniform01(gen) * static_cast<double>(n));
  return i < n ? i : n - 1;
}

}  // namespace klce::rng
