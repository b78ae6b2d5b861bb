#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "nnfuse/error.hpp"

// Portable randomness. The engine is std::mt19937_64 seeded through
// std::seed_seq; both are fully specified by the standard, so the raw 64-bit
// stream is identical on every conforming platform. The standard
// distributions are not, so every draw below is derived from raw engine
// output by hand.

namespace nnfuse::rng {

using Engine = std::mt19937_64;

/// Independent stream for (seed, stream id). Parallel work items use their
/// own index as the stream id so results do not depend on scheduling.
inline Engine make_stream(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  return Engine(seq);
}

/// Uniform integer in [0, n), unbiased by rejection.
inline std::uint64_t uniform_index(Engine& eng, std::uint64_t n) {
  if (n == 0) fail(ErrorKind::kArgument, "uniform_index over empty range");
  const std::uint64_t limit = Engine::max() - Engine::max() % n;
  std::uint64_t r;
  do {
    r = eng();
  } while (r >= limit);
  return r % n;
}

/// Uniform double in [0, 1) with 53 random mantissa bits.
inline double uniform_unit(Engine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

/// Index into a discrete distribution given by non-negative weights.
inline std::size_t categorical(Engine& eng, const std::vector<double>& weights) {
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  const double u = uniform_unit(eng) * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // u can only reach here through rounding; return the last positive weight.
  for (std::size_t i = weights.size(); i-- > 0;) {
    if (weights[i] > 0.0) return i;
  }
  return 0;
}

/// Poisson draw by multiplication of uniforms; intended for small rates.
inline std::uint64_t poisson(Engine& eng, double rate) {
  if (rate <= 0.0) return 0;
  const double limit = std::exp(-rate);
  std::uint64_t k = 0;
  double p = uniform_unit(eng);
  while (p > limit) {
    ++k;
    p *= uniform_unit(eng);
  }
  return k;
}

/// k distinct indices from [0, population), in draw order (partial
/// Fisher-Yates).
inline std::vector<std::size_t> sample_without_replacement(
    Engine& eng, std::size_t population, std::size_t k) {
  if (k > population) {
    fail(ErrorKind::kArgument, "cannot draw " + std::to_string(k) +
                                   " items from a population of " +
                                   std::to_string(population));
  }
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + static_cast<std::size_t>(uniform_index(eng, population - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace nnfuse::rng
