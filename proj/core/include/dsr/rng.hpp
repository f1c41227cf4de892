#pragma once

#include <cstdint>
#include <random>

namespace dsr {

// Deterministic random source. mt19937_64 has a bit-exact sequence mandated by
// the standard; the double conversions below avoid std::*_distribution, whose
// output may differ between library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds, rejection-free modulo with negligible bias for small ranges
  int uniform_int(int lo, int hi);

  // standard normal via Box-Muller, second value cached
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // independent stream derived from a master seed (splitmix64 mixing)
  static std::uint64_t derive(std::uint64_t master, std::uint64_t stream);

 private:
  std::mt19937_64 eng_;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace dsr
