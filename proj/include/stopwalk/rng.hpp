#pragma once

#include <cstdint>
#include <random>

namespace stopwalk {

/// splitmix64 finalizer; used to derive independent engine seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Reproducible random stream identified by (master seed, stream index).
/// Distinct pairs give statistically independent sequences; the same pair
/// always reproduces the same sequence, on every platform.
class PrngStream {
 public:
  PrngStream(std::uint64_t seed, std::uint64_t index)
      : seed_(seed), index_(index), engine_(splitmix64(splitmix64(seed) ^ splitmix64(~index))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t index() const { return index_; }

  /// Child stream k. Children of different parents never collide in
  /// practice because the index is a hash of the parent's index and k.
  PrngStream substream(std::uint64_t k) const {
    return PrngStream(seed_, splitmix64(index_ * 0x2545f4914f6cdd1dULL + splitmix64(k + 1)));
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t seed_;
  std::uint64_t index_;
  std::mt19937_64 engine_;
};

}  // namespace stopwalk
