#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace mgpms {

/// 64-bit FNV-1a, used to turn names and ids into stream keys.
std::uint64_t hash_key(std::string_view text);

/// Seeded generator. Randomness is never ambient: every stochastic routine
/// takes an `Rng&` or derives one with `Rng::keyed`.
///
/// Keyed streams make draws independent of iteration order. Training derives
/// the stream for (seed, epoch, patient, feature) directly, so removing a
/// feature or reordering a batch leaves every other draw untouched.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  static Rng keyed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  bool bernoulli(double p);
  int poisson(double mean);
  double exponential(double mean);
  std::size_t index(std::size_t n);       // uniform in [0, n)

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace mgpms
