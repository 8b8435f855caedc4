#include "kopath/rng.hpp"

#include <cmath>
#include <numbers>

namespace kopath {

std::uint64_t mix64(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) noexcept : key_(mix64(seed ^ 0x6B6F70617468ULL)) {}

Rng Rng::split(std::uint64_t stream) const noexcept {
  return Rng(mix64(key_ ^ mix64(stream + 0xD1B54A32D192ED03ULL)), 0);
}

std::uint64_t Rng::next_u64() noexcept {
  const std::uint64_t c = counter_++;
  return mix64(key_ ^ mix64(c));
}

double Rng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

double Rng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t bound) noexcept {
  const std::uint64_t max = ~std::uint64_t{0};
  const std::uint64_t limit = max - max % bound;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % bound;
}

}  // namespace kopath
