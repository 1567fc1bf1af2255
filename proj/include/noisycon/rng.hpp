#pragma once

#include <cstdint>
#include <random>

namespace noisycon {

/// SplitMix64 finalizer. Used to turn structured seeds (master, trial) into
/// well-separated engine seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of trial `trial` in an ensemble rooted at `master`.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t trial) noexcept {
  return splitmix64(splitmix64(master) ^ splitmix64(trial + 0x632BE59BD9B4E019ULL));
}

/// Deterministic random stream owned by exactly one caller.
///
/// Backed by std::mt19937_64, whose output sequence is fixed by the standard,
/// and converted to doubles by hand (53 high bits) so the stream is identical
/// on every conforming platform. std::uniform_real_distribution is not used
/// because its algorithm is implementation-defined.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on [-half_width, half_width).
  double symmetric(double half_width) { return half_width * (2.0 * uniform01() - 1.0); }

  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace noisycon
