#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <utility>

namespace jigen {

// SplitMix64 mixer, used to derive independent stream seeds from a base seed.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seed for a named substream: stream_seed(base, kind, epoch, step).
// Every consumer of randomness in a run draws from its own substream so that
// adding or removing one consumer never shifts another's draws.
inline uint64_t stream_seed(uint64_t base, uint64_t a, uint64_t b = 0,
                            uint64_t c = 0) {
  uint64_t s = splitmix64(base);
  s = splitmix64(s ^ (a * 0x9e3779b97f4a7c15ull));
  s = splitmix64(s ^ (b * 0xc2b2ae3d27d4eb4full));
  s = splitmix64(s ^ (c * 0x165667b19e3779f9ull));
  return s;
}

// Substream kinds used by the trainer and batch composer.
enum class StreamKind : uint64_t {
  init = 1,
  split = 2,
  source_batch = 3,
  target_batch = 4,
  validation = 5,
  perm_pool = 6,
};

// Deterministic RNG with samplers that do not depend on the standard
// library's (implementation-defined) distribution algorithms.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // Uniform in [0, n). Lemire multiply-shift; bias is below 2^-64 * n.
  uint64_t uniform_u64(uint64_t n) {
    return static_cast<uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(
                    uniform_u64(static_cast<uint64_t>(hi - lo) + 1));
  }

  size_t uniform_index(size_t n) { return static_cast<size_t>(uniform_u64(n)); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  // Fisher-Yates; deterministic for a given stream regardless of platform.
  template <class It>
  void shuffle(It first, It last) {
    const auto n = static_cast<size_t>(last - first);
    for (size_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace jigen
