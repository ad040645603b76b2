// Counter-based random streams for the tracer and seeded engines for the
// training loop.
#pragma once

#include <cstdint>
#include <random>

namespace glint {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-dependent hash of a key sequence.
constexpr std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ (splitmix64(b) + 0x632be59bd9b4e019ULL + (a << 6) + (a >> 2)));
}

template <typename... Rest>
constexpr std::uint64_t hash_keys(std::uint64_t first, Rest... rest) {
  std::uint64_t h = splitmix64(first);
  ((h = hash_combine(h, static_cast<std::uint64_t>(rest))), ...);
  return h;
}

/// PCG32 (XSH-RR). Small state, good statistics; one instance per
/// (pixel, sample) so results do not depend on scheduling.
class Pcg32 {
 public:
  using result_type = std::uint32_t;

  constexpr Pcg32(std::uint64_t seed, std::uint64_t stream) : inc_((stream << 1u) | 1u) {
    next();
    state_ += seed;
    next();
  }

  constexpr std::uint32_t next() {
    const std::uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    const auto rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  /// Uniform double in [0, 1).
  constexpr double uniform() {
    const std::uint64_t hi = next();
    const std::uint64_t lo = next();
    return static_cast<double>(((hi << 32) | lo) >> 11) * 0x1.0p-53;
  }

  constexpr std::uint32_t operator()() { return next(); }
  static constexpr std::uint32_t min() { return 0; }
  static constexpr std::uint32_t max() { return 0xffffffffu; }

 private:
  std::uint64_t state_ = 0;
  std::uint64_t inc_;
};

/// Stream for one path sample of one pixel of the virtual full image.
inline Pcg32 pixel_stream(std::uint64_t seed, std::uint64_t pixel_index, std::uint64_t sample) {
  return Pcg32(hash_keys(seed, pixel_index, sample), hash_keys(seed, sample, pixel_index, 0x51ULL));
}

/// Engine used for chain proposals, reuse decisions and replay draws.
using Engine = std::mt19937_64;

inline double uniform01(Engine& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace glint
