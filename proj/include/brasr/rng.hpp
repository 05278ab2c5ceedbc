#pragma once

#include <cstdint>
#include <string_view>

namespace brasr {

// 64-bit FNV-1a. Used both for deriving named RNG substreams and for the
// character n-gram feature hash, so it must stay fixed.
std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 14695981039346656037ull);

// SplitMix64 generator with hand-rolled distributions. The standard library's
// distribution objects are implementation-defined, so everything that has to
// replay bit-identically goes through this class instead.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  // Derives an independent stream from a root seed and a stream name.
  static Rng substream(std::uint64_t root_seed, std::string_view name,
                       std::uint64_t index = 0);

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Uniform integer in [0, bound), bound > 0. Rejection sampling, unbiased.
  std::uint64_t uniform_int(std::uint64_t bound);
  // Standard normal via Box-Muller.
  double gaussian();

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace brasr
