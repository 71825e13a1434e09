#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace tsdet {

// splitmix64 finalizer. Stable across platforms, used both as the PRNG step
// and to derive substream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_bytes(const void* data, std::size_t n, std::uint64_t seed = 0xcbf29ce484222325ULL);

inline std::uint64_t hash_str(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  return hash_bytes(s.data(), s.size(), seed);
}

// Deterministic PRNG with explicitly derivable substreams. Every consumer in
// the project pulls from its own child stream, so adding a consumer never
// shifts the draws seen by another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix64(seed ^ 0xd1b54a32d192ed03ULL)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (fresh pair each call, second value dropped).
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Integer in [lo, hi), hi > lo.
  std::int64_t randint(std::int64_t lo, std::int64_t hi);

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(randint(0, static_cast<std::int64_t>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  // Independent substream identified by a tag and up to two indices.
  Rng child(std::string_view tag, std::uint64_t a = 0, std::uint64_t b = 0) const {
    std::uint64_t s = hash_str(tag, state_);
    s = mix64(s ^ mix64(a));
    s = mix64(s ^ mix64(b ^ 0x5851f42d4c957f2dULL));
    return Rng(s);
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace tsdet
