#pragma once

#include <cstdint>
#include <span>

namespace adabn::rng {

// All randomness in the project is counter-based: a 64-bit key is mixed from
// (seed, purpose tag, indices...) and either hashed per element or advanced
// as a splitmix64 stream. No libc/std engines, so every draw is reproducible
// bit-for-bit across platforms and independent of call order elsewhere.

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z += kGolden;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
  return mix64(a ^ (mix64(b) + kGolden + (a << 6) + (a >> 2)));
}

template <typename... Rest>
constexpr std::uint64_t stream_key(std::uint64_t first, Rest... rest) {
  std::uint64_t k = mix64(first);
  ((k = combine(k, static_cast<std::uint64_t>(rest))), ...);
  return k;
}

// Purpose tags keep independent streams independent even under equal seeds.
enum Tag : std::uint64_t {
  kInit = 0x11,
  kShuffle = 0x22,
  kDropout = 0x33,
  kSubset = 0x44,
  kFold = 0x55,
  kSynthetic = 0x66,
  kTest = 0x77,
};

// Stateless per-element draw: uniform in [0,1) with 53 random bits.
inline double uniform01(std::uint64_t key, std::uint64_t counter) {
  return static_cast<double>(mix64(key ^ mix64(counter)) >> 11) * 0x1.0p-53;
}

// Sequential splitmix64 stream for shuffles and parameter init.
class Stream {
public:
  explicit Stream(std::uint64_t key) : state_(key) {}

  std::uint64_t next_u64() {
    state_ += kGolden;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1).
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0,n), bias removed by rejection.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

private:
  std::uint64_t state_;
};

// In-place Fisher-Yates driven by the given stream.
template <typename T>
void shuffle(std::span<T> values, Stream& stream) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(stream.next_below(i));
    T tmp = values[i - 1];
    values[i - 1] = values[j];
    values[j] = tmp;
  }
}

}  // namespace adabn::rng
