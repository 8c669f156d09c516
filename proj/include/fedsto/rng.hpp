#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fedsto {

// Deterministic RNG wrapper. Distributions are implemented here instead of
// using std:: distributions so that streams are pinned to the seed and not
// to a particular standard-library implementation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(splitmix(seed)) {}

  // Derives an independent stream from (seed, lane ids). Used to give each
  // (client, round) or (dataset, index) its own reproducible stream.
  static Rng derive(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t s = seed;
    s = splitmix(s ^ (0x9e3779b97f4a7c15ULL + a));
    s = splitmix(s ^ (0xbf58476d1ce4e5b9ULL + b));
    s = splitmix(s ^ (0x94d049bb133111ebULL + c));
    return Rng(s);
  }

  uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  // Standard normal via Box-Muller (no cached spare, keeps the stream simple).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

 private:
  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace fedsto
