#include "tsdet/rng.hpp"

#include <cmath>
#include <numbers>

namespace tsdet {

std::uint64_t hash_bytes(const void* data, std::size_t n, std::uint64_t seed) {
  // FNV-1a, folded through mix64 at the end for better avalanche.
  const unsigned char* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return mix64(h);
}

double Rng::normal() {
  // u1 in (0,1] so the log is finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::int64_t Rng::randint(std::int64_t lo, std::int64_t hi) {
  std::uint64_t range = static_cast<std::uint64_t>(hi - lo);
  // Multiply-shift bounded draw; bias is negligible for the ranges used here
  // (< 2^32) and the result is platform-stable.
  unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * range;
  return lo + static_cast<std::int64_t>(m >> 64);
}

}  // namespace tsdet
