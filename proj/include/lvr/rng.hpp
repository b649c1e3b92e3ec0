#pragma once

#include <cstdint>

namespace lvr {

// Counter-based generator: the i-th draw is a pure function of (key, i), so
// a stream can be split across threads or replayed from a saved position.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t position = 0) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t position() const noexcept { return position_; }
  void set_position(std::uint64_t p) noexcept { position_ = p; }

  // Independent child stream for index i.
  Rng derive(std::uint64_t i) const noexcept;

  std::uint64_t next_u64() noexcept { return bits_at(position_++); }
  // Uniform in [0, 1).
  double uniform() noexcept { return to_unit(next_u64()); }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;
  double normal() noexcept;

  // Stateless access; does not advance the stream.
  std::uint64_t bits_at(std::uint64_t counter) const noexcept;
  double uniform_at(std::uint64_t counter) const noexcept { return to_unit(bits_at(counter)); }
  // Standard normal drawn from counters (2*i, 2*i+1).
  double normal_at(std::uint64_t i) const noexcept;

  static double to_unit(std::uint64_t bits) noexcept { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

  bool operator==(const Rng&) const = default;

 private:
  std::uint64_t seed_;
  std::uint64_t key_;
  std::uint64_t position_;
};

std::uint64_t mix64(std::uint64_t x) noexcept;

}  // namespace lvr
