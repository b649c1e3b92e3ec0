#include "lvr/rng.hpp"

#include <cmath>
#include <numbers>

namespace lvr {

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t position) noexcept
    : seed_(seed), key_(mix64(seed ^ 0x6A09E667F3BCC908ULL)), position_(position) {}

Rng Rng::derive(std::uint64_t i) const noexcept {
  return Rng(mix64(key_ ^ mix64(i + 0xA54FF53A5F1D36F1ULL)));
}

std::uint64_t Rng::bits_at(std::uint64_t counter) const noexcept {
  return mix64(key_ + mix64(counter ^ 0x3C6EF372FE94F82BULL));
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t r;
  do {
    r = next_u64();
  } while (r >= limit);
  return r % n;
}

double Rng::normal() noexcept {
  const double z = normal_at(position_ / 2 + (position_ & 1));
  position_ = (position_ + (position_ & 1)) + 2;
  return z;
}

double Rng::normal_at(std::uint64_t i) const noexcept {
  // Box-Muller; u1 in (0, 1] keeps log finite.
  const double u1 = 1.0 - uniform_at(2 * i);
  const double u2 = uniform_at(2 * i + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace lvr
