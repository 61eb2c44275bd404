#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace peri::rng {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a(std::string_view text);

/// Seed for an independent stream identified by (purpose, index) under a master
/// seed. Streams never depend on scheduling or on how many streams exist.
std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose, std::uint64_t index = 0);

/// Platform-stable generator: mt19937_64 output is fixed by the standard, the
/// distributions below are implemented here rather than taken from <random>.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}
  Stream(std::uint64_t master, std::string_view purpose, std::uint64_t index = 0)
      : engine_(derive_seed(master, purpose, index)) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace peri::rng
