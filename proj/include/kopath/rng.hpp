#pragma once

#include <cstdint>

namespace kopath {

// Counter-based generator: the n-th draw of a stream is mix(key, n), so a
// stream can be split into independent children without sharing state. All
// randomness in the library flows from a single user seed through split().
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  // Independent child stream; split(i) on equal parents yields equal children.
  Rng split(std::uint64_t stream) const noexcept;

  std::uint64_t next_u64() noexcept;
  // Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept;
  // Uniform on [lo, hi).
  double uniform(double lo, double hi) noexcept;
  // Standard normal via Box-Muller; caches the second variate.
  double normal() noexcept;
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) noexcept;

  std::uint64_t key() const noexcept { return key_; }

 private:
  Rng(std::uint64_t key, int) noexcept : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace kopath
