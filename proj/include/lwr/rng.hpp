#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace lwr {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream key from a seed and a path of indices,
/// e.g. stream_key(seed, {frame, particle, purpose}).
constexpr std::uint64_t stream_key(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> path) noexcept {
  std::uint64_t key = mix64(seed + 0x9e3779b97f4a7c15ULL);
  for (auto index : path) {
    key = mix64(key ^ mix64(index + 0x632be59bd9b4e019ULL));
  }
  return key;
}

/// Counter-based generator: the n-th output is mix64(key + n * golden).
/// Satisfies UniformRandomBitGenerator, so it plugs into <random> distributions.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return mix64(key_ + counter_);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Stream purposes used when deriving per-particle keys.
enum class Stream : std::uint64_t {
  initial = 1,
  resample = 2,
  propagate = 3,
  jitter = 4,
  observation = 5,
  evolution = 6,
  mixture = 7,
};

inline CounterRng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  return CounterRng(stream_key(seed, path));
}

}  // namespace lwr
