#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace flair {

// Deterministic RNG used everywhere randomness is needed. The engine is
// std::mt19937_64 (bit-exact by the standard); the distributions are written
// out by hand so results do not depend on the standard library's
// implementation-defined distribution code.
class Rng {
public:
  explicit Rng(uint64_t seed) : root_seed_(seed), eng_(seed) {}

  uint64_t raw() { return eng_(); }

  // Uniform double in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range.
  long uniform_int(long lo, long hi) {
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    // Rejection-free modulo is fine here: span is tiny next to 2^64, and the
    // bias is far below anything observable in this project.
    return lo + static_cast<long>(eng_() % span);
  }

  // Standard normal via Box-Muller, spare value cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Named substream, independent of draws already made on this object.
  Rng fork(const std::string& tag) const {
    return Rng(splitmix(root_seed_ ^ fnv1a(tag)));
  }
  Rng fork(uint64_t tag) const { return Rng(splitmix(root_seed_ ^ splitmix(tag ^ 0x9e3779b97f4a7c15ull))); }

  uint64_t root_seed() const { return root_seed_; }

  static uint64_t fnv1a(const std::string& s) {
    uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

private:
  uint64_t root_seed_;
  std::mt19937_64 eng_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace flair
