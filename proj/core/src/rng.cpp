#include "mcxtfc/rng.hpp"

#include <cmath>

namespace mcxtfc {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t CounterRng::next_u64() { return mix64(key_ ^ mix64(counter_++)); }

double CounterRng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double CounterRng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

double CounterRng::normal01() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform01();
  const double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

double CounterRng::normal(double mean, double std) {
  return mean + std * normal01();
}

double CounterRng::exponential(double mean) {
  return -mean * std::log(1.0 - uniform01());
}

std::uint64_t stream_seed(std::uint64_t base_seed, StreamPurpose purpose,
                          std::uint64_t index) {
  std::uint64_t key = mix64(base_seed);
  key = mix64(key ^ (static_cast<std::uint64_t>(purpose) << 56));
  key = mix64(key ^ index);
  return key;
}

}  // namespace mcxtfc
