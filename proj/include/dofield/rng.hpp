#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace dofield {

// splitmix64 finalizer; used to derive independent child streams.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Deterministic RNG. std::mt19937_64 is fully specified by the standard, and
// every distribution below is implemented by hand, so the exact stream depends
// only on the seed (std::uniform_real_distribution et al. are
// implementation-defined and would break byte-reproducibility guarantees).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t bits() { return gen_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n). n must be > 0.
  std::uint64_t index(std::uint64_t n) {
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
    std::uint64_t v;
    do {
      v = bits();
    } while (v >= limit);
    return v % n;
  }

  // Standard normal via Box-Muller (cosine branch; one uniform pair per draw
  // so the stream advance is fixed).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  // Draw `count` distinct indices from [0, n) without replacement
  // (partial Fisher-Yates). count must be <= n.
  std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::uint32_t count) {
    std::vector<std::uint32_t> pool(n);
    for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
    for (std::uint32_t i = 0; i < count; ++i) {
      const std::uint64_t j = i + index(n - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    return pool;
  }

  // Independent child stream, stable under the parent's own draw sequence.
  Rng split(std::uint64_t stream) const { return Rng(mix64(seed_ ^ mix64(stream))); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace dofield
