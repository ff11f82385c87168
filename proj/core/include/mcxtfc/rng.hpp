#pragma once

#include <cstdint>

namespace mcxtfc {

// Counter-based generator in the SplitMix64 family. Every output is a pure
// function of (key, counter), so draws are reproducible regardless of how
// work is scheduled across threads. Streams are split by deriving the key
// from a base seed plus a stream id; ensembles give each replicate its own
// ids (see stream_seed) so replicates can run in any order and still see
// identical numbers.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform01();

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller (consumes two uniforms per call).
  double normal01();

  double normal(double mean, double std);

  /// Exponential with the given mean (> 0).
  double exponential(double mean);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// SplitMix64 finalizer; a bijective 64-bit mix.
std::uint64_t mix64(std::uint64_t z);

// Stream-splitting scheme: a (base seed, purpose, index) triple maps to an
// independent key. `purpose` separates noise draws from basis draws, etc.;
// `index` is typically the Monte-Carlo replicate number.
enum class StreamPurpose : std::uint64_t {
  kNoise = 1,
  kBasis = 2,
  kInitialCondition = 3,
  kDiscrepancyBasis = 4,
  kSampling = 5,
};

std::uint64_t stream_seed(std::uint64_t base_seed, StreamPurpose purpose,
                          std::uint64_t index);

}  // namespace mcxtfc
