#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace bcqlab {

// Deterministic random source used throughout the library.
//
// Every draw is derived from raw std::mt19937_64 output through fixed
// arithmetic (53-bit mantissa scaling for uniforms, Box-Muller for normals,
// 128-bit multiply-shift for bounded integers), so streams depend only on
// the seed and never on the standard library's distribution implementations.
// Components that need independent streams derive child seeds with
// derive_seed().
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; the second draw of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in {0, ..., n-1}; n must be positive.
  int uniform_int(int n) {
    return static_cast<int>(
        (static_cast<unsigned __int128>(engine_()) * static_cast<std::uint64_t>(n)) >> 64);
  }

  /// Index sampled from a probability vector (anything with size() and []).
  /// Rounding remainders at the tail fall on the last index.
  template <class Vec>
  int categorical(const Vec& probs) {
    const double u = uniform();
    double acc = 0.0;
    int last = 0;
    for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
      acc += probs[i];
      last = i;
      if (u < acc) return i;
    }
    return last;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

/// Child-stream seed derivation (splitmix64 finalizer over a salted root).
/// Each component of a run (collector, minibatch sampler, noise source, ...)
/// owns an Rng seeded from the run seed and a distinct stream tag.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace bcqlab
