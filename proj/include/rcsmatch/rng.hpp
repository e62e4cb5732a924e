#pragma once

// Deterministic randomness utilities. Everything downstream of a seed must be
// bit-reproducible across runs and platforms, so shuffling and normal variate
// generation are written out here instead of relying on the
// implementation-defined std::shuffle / std::normal_distribution.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

namespace rcsmatch {

// Unbiased draw from {0, 1, ..., n-1} via rejection sampling.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
  const std::uint64_t limit = max - max % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

// Fisher-Yates shuffle with a pinned draw sequence.
template <typename T>
void deterministic_shuffle(std::vector<T>& items, std::mt19937_64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(items[i - 1], items[j]);
  }
}

// Uniform double in (0, 1], 53-bit resolution.
inline double uniform_unit(std::mt19937_64& rng) {
  return 1.0 - static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Standard normal variates via Box-Muller; consumes the engine in pairs and
// caches the spare so a stream of single draws stays deterministic.
class NormalStream {
 public:
  explicit NormalStream(std::mt19937_64& rng) : rng_(rng) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_unit(rng_);
    const double u2 = uniform_unit(rng_);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::mt19937_64& rng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 finalizer; the standard way to turn a counter into a stream.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Combines a master seed with domain tags (scenario, scheme, replication
// index, ...) into an independent stream seed.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t t : tags) {
    h = splitmix64(h ^ (t + 0x9e3779b97f4a7c15ULL));
  }
  return h;
}

}  // namespace rcsmatch
