#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>

namespace conserva {

// Counter-based randomness: every draw is a pure function of (seed, path of
// 64-bit indices). Streams split by forking a key, so independent consumers
// stay bitwise reproducible as long as their paths differ.

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t combine(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(a ^ mix64(b));
}

class RngKey {
public:
  explicit constexpr RngKey(std::uint64_t seed) : h_(mix64(seed ^ 0x853c49e6748fea9bULL)) {}

  constexpr RngKey fork(std::uint64_t index) const { return RngKey(combine(h_, index), raw_tag{}); }

  constexpr std::uint64_t word(std::uint64_t lane = 0) const {
    return mix64(h_ ^ mix64(0xd1e5c0deULL + lane));
  }

  // in [0, 1)
  double u01(std::uint64_t lane = 0) const {
    return static_cast<double>(word(lane) >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi, std::uint64_t lane = 0) const {
    return lo + (hi - lo) * u01(lane);
  }

  // in [0, n)
  std::uint64_t below(std::uint64_t n, std::uint64_t lane = 0) const {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(word(lane)) * n) >> 64);
  }

  // standard normal; consumes lanes 2*lane and 2*lane+1
  double gaussian(std::uint64_t lane = 0) const {
    const double u1 = u01(2 * lane);
    const double u2 = u01(2 * lane + 1);
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(6.283185307179586476925287 * u2);
  }

private:
  struct raw_tag {};
  constexpr RngKey(std::uint64_t raw, raw_tag) : h_(raw) {}
  std::uint64_t h_;
};

// Hash of a point's bit pattern. Evaluating the same point twice yields the
// same trace id, hence the same derivative selections.
inline std::uint64_t hash_point(std::span<const double> x) {
  std::uint64_t h = 0x9d3f2c691a4b5e77ULL;
  for (double v : x) h = combine(h, std::bit_cast<std::uint64_t>(v));
  return h;
}

}  // namespace conserva
