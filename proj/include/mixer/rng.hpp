#ifndef MIXER_RNG_HPP_
#define MIXER_RNG_HPP_

#include <cmath>
#include <cstdint>

namespace mixer {

// splitmix64 step; also used to derive independent sub-seeds.
inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stable sub-seed for (seed, tag, index). Used so dataset generation can be
// regenerated piecewise: the stream for identity 7's latent never depends on
// how many samples identity 6 drew.
inline uint64_t derive_seed(uint64_t seed, uint64_t tag, uint64_t index) {
  uint64_t s = seed ^ (0x9e3779b97f4a7c15ULL * (tag + 1));
  uint64_t a = splitmix64(s);
  s ^= index + 0x2545f4914f6cdd1dULL;
  uint64_t b = splitmix64(s);
  return a ^ (b << 1);
}

// xoshiro256++ seeded through splitmix64. Fixed algorithm, not the standard
// library's unspecified distributions, so every stream is reproducible
// bit-for-bit across platforms.
class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t s = seed;
    for (auto& w : s_) w = splitmix64(s);
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), n >= 1. Lemire multiply-shift.
  int uniform_int(int n) {
    const uint64_t x = next_u64();
    return static_cast<int>((static_cast<unsigned __int128>(x) *
                             static_cast<unsigned __int128>(n)) >> 64);
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t s_[4];
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace mixer

#endif  // MIXER_RNG_HPP_
