#pragma once

// Seeded random source with distribution code written against the raw
// engine output, so that streams are identical across standard libraries.

#include <cstdint>
#include <random>

namespace hbias {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform on {0, ..., bound - 1}; rejection sampling keeps it unbiased.
  std::uint64_t below(std::uint64_t bound);

  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Derives an independent stream seed from a user seed and a purpose tag.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace hbias
