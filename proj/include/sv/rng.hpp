#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace sv {

// Deterministic 64-bit generator (SplitMix64). The same seed produces the
// same stream on every platform; this is the reproducibility anchor for
// weight init, shuffling, dropout masks and reparameterization noise.
//
// Stream-split rule: fork(tag) and fork(a, b) derive a child seed by
// hashing the tag (FNV-1a) or the indices into the current state and
// running the result through the SplitMix64 mixer. Forked streams are
// independent of how much of the parent stream has been consumed only if
// forked from the same parent state, so fork before drawing.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // standard normal via Box-Muller; consumes exactly two u64 per call
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 == 0.0) u1 = uniform();  // log(0) guard
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.28318530717958647692 * u2);
  }

  // uniform integer in [0, n); n > 0
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  Rng fork(std::string_view tag) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a 64
    for (char c : tag) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return Rng(mix(state_ ^ h));
  }

  Rng fork(std::uint64_t a, std::uint64_t b = 0) const {
    return Rng(mix(mix(state_ ^ (a * 0x9e3779b97f4a7c15ULL)) ^ (b * 0xd1342543de82ef95ULL)));
  }

  std::uint64_t state() const { return state_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace sv
