#ifndef SIAMPROG_RNG_HPP_
#define SIAMPROG_RNG_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace siamprog {

// All randomness in the project flows through these helpers. std::mt19937_64
// output is pinned by the standard, and the value mappings below avoid
// std::uniform_real_distribution / std::normal_distribution, whose results
// are implementation-defined. Same seed, same stream, on every platform.

// splitmix64 finalizer; used to derive independent stream seeds from
// (seed, counter) pairs so parallel and serial generation agree.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t seed, uint64_t a) { return mix64(seed ^ mix64(a)); }

inline uint64_t mix64(uint64_t seed, uint64_t a, uint64_t b) {
  return mix64(mix64(seed, a) ^ mix64(b));
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal via Box-Muller; one spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Uniform integer in [0, n). Modulo bias is irrelevant here; determinism
  // is what matters.
  uint64_t below(uint64_t n) { return engine_() % n; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Deterministic Fisher-Yates shuffle driven by an Rng.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (size_t i = v.size(); i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace siamprog

#endif  // SIAMPROG_RNG_HPP_
