#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "odemri/tensor.hpp"

namespace odemri {

// SplitMix64 finalizer, used to decorrelate seed/stream pairs.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ ~splitmix64(stream));
}

// Deterministic random source. All distributions are built from raw engine
// draws so sequences are pinned by this code, not by the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  // Independent generator derived from the original seed and a stream id.
  Rng stream(std::uint64_t stream_id) const { return Rng(mix_seed(seed_, stream_id)); }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  Index uniform_index(Index n) { return static_cast<Index>(next_u64() % static_cast<std::uint64_t>(n)); }

  // Standard normal via Box-Muller (no cached spare, so state is just the engine).
  double gaussian() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  std::vector<Index> permutation(Index n) {
    std::vector<Index> p(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
    for (Index i = n - 1; i > 0; --i)
      std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(uniform_index(i + 1))]);
    return p;
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace odemri
