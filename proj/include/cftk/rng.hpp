#pragma once

// Counter-based random streams. Every draw is a pure function of
// (seed, stream, a, b, index), so any draw can be regenerated without
// replaying earlier ones. Training uses (epoch, batch) for (a, b), which is
// what makes a resumed run bit-identical to an uninterrupted one.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>
#include <vector>

namespace cftk {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a; stable across platforms, unlike std::hash.
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) : key_(splitmix64(seed ^ splitmix64(stream))) {}

  std::uint64_t bits(std::uint64_t a, std::uint64_t b, std::uint64_t index) const {
    std::uint64_t h = splitmix64(key_ ^ a);
    h = splitmix64(h ^ b);
    return splitmix64(h ^ index);
  }

  // Uniform on the open interval (0, 1).
  double uniform(std::uint64_t a, std::uint64_t b, std::uint64_t index) const {
    return (static_cast<double>(bits(a, b, index) >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller on two independent uniforms.
  double normal(std::uint64_t a, std::uint64_t b, std::uint64_t index) const {
    const double u1 = uniform(a, b, 2 * index);
    const double u2 = uniform(a, b, 2 * index + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::vector<double> normals(std::uint64_t a, std::uint64_t b, std::size_t count) const {
    std::vector<double> v(count);
    for (std::size_t i = 0; i < count; ++i) v[i] = normal(a, b, i);
    return v;
  }

  // Index drawn from a discrete distribution given by cumulative weights.
  std::size_t categorical(std::span<const double> cumulative, std::uint64_t a, std::uint64_t b,
                          std::uint64_t index) const {
    const double u = uniform(a, b, index) * cumulative.back();
    for (std::size_t k = 0; k < cumulative.size(); ++k)
      if (u < cumulative[k]) return k;
    return cumulative.size() - 1;
  }

  // Fisher-Yates permutation of [0, n).
  std::vector<std::size_t> permutation(std::size_t n, std::uint64_t a, std::uint64_t b) const {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
      const std::size_t j = bits(a, b, i) % i;
      std::swap(p[i - 1], p[j]);
    }
    return p;
  }

 private:
  std::uint64_t key_;
};

// Stream identifiers; distinct so that no two consumers share draws.
namespace streams {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kTrainNoise = 2;
inline constexpr std::uint64_t kBatchOrder = 3;
inline constexpr std::uint64_t kSplit = 4;
inline constexpr std::uint64_t kSynthesis = 5;
inline constexpr std::uint64_t kMonteCarlo = 6;
inline constexpr std::uint64_t kSimulation = 7;
}  // namespace streams

}  // namespace cftk
