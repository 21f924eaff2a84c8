#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace qtune {

// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. Distributions are implemented here because the standard library
// ones differ between vendors.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform integer in [0, bound); bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  /// Standard normal via Box-Muller (no cached second variate).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a 64-bit.
std::uint64_t hash_id(std::string_view id);

/// Per-item seed, independent of processing order.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view id);
std::uint64_t derive_seed(std::uint64_t global_seed, std::uint64_t index);

/// Draws `count` distinct indices from [0, n) by partial Fisher-Yates.
/// Returned in draw order.
std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n,
                                                    std::size_t count);

}  // namespace qtune
