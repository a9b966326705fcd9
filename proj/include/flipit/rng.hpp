#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

namespace flipit {

// SplitMix64 step (Vigna). Used to expand seeds and to derive independent
// sub-stream seeds; never used as the game RNG itself.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic seed for sub-stream `index` of a base seed. Chaining calls
// gives a seed tree: run -> cell -> game -> agent.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t s = base ^ (0xa0761d6478bd642fULL + index * 0xe7037ed1a0b428dbULL);
  return splitmix64(s);
}

// xoshiro256** 1.0 (Blackman & Vigna), seeded through SplitMix64.
// Chosen over the std engines so that streams are bit-identical across
// platforms and standard-library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64(sm);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1), 53 significant bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer in [0, n); rejection sampling on the top range.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi_exclusive) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi_exclusive - lo)));
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Geometric on {1, 2, ...} with success probability p: P(k) = p(1-p)^(k-1).
  // Sampled by inversion so one draw consumes exactly one 64-bit word.
  long long geometric1(double p) {
    if (p >= 1.0) return 1;
    const double u = uniform01();
    const double k = std::floor(std::log1p(-u) / std::log1p(-p));
    if (k >= 0x1p62) return 1LL << 62;  // overflow guard for tiny p
    return 1 + static_cast<long long>(k);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<std::uint64_t, 4> state_{};
};

}  // namespace flipit
