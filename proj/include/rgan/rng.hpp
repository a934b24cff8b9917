#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace rgan {

// Splittable 64-bit PRNG (splitmix64 finalizer). Every random draw in the
// project comes from one of these streams so that a run is fully determined
// by its seed. Streams are derived by name: derive_stream(seed, tag) gives an
// independent generator per purpose ("init.gen_h.patch.weight",
// "epoch.3.low", ...), which keeps draw order stable when unrelated code
// changes.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  uint64_t next_below(uint64_t n) { return next() % n; }

  // Standard normal via Box-Muller. Draws two uniforms per pair; the second
  // value of each pair is consumed before new uniforms are drawn.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x00000100000001B3ULL;
  }
  return h;
}

// Independent stream for (seed, tag). One splitmix step decorrelates the
// combined value before it becomes a stream state.
inline SplitMix64 derive_stream(uint64_t seed, std::string_view tag) {
  SplitMix64 mixer(seed ^ fnv1a64(tag));
  return SplitMix64(mixer.next());
}

}  // namespace rgan
