#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace drgrade {

/// Advances `state` and returns the next splitmix64 output.
std::uint64_t splitmix64(std::uint64_t& state);

/// Order-sensitive hash of a list of 64-bit words, used to derive stream
/// seeds such as hash(seed, epoch, grade).
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words);

/// xoshiro256** generator seeded through splitmix64. All derived
/// distributions are implemented here so streams are identical across
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n); n must be > 0. Rejection sampled, unbiased.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via the Box-Muller transform.
  double normal();

  std::array<std::uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace drgrade
