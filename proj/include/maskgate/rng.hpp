#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace maskgate {

/// Seeded random stream. All randomness in the library flows from a single
/// master seed through named sub-streams, so components can be reseeded
/// independently: Rng(seed, "shuffle"), Rng(seed, "init/classifier/w"), ...
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view stream);

  double normal(double mean = 0.0, double stddev = 1.0);
  double uniform(double lo, double hi);

  /// Fan-in-scaled uniform draw in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
  double fan_in_uniform(int fan_in);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace maskgate
