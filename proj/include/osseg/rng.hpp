#pragma once

#include <cmath>
#include <cstdint>

namespace osseg {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace detail

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
  std::uint64_t s = a ^ (b + 0x9E3779B97F4A7C15ULL + (a << 6) + (a >> 2));
  return detail::splitmix64(s);
}

// Deterministic generator with explicit, implementation-independent sampling
// algorithms so that seeded runs replay exactly on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {
    // decorrelate trivially related seeds
    (void)next_u64();
  }

  std::uint64_t next_u64() { return detail::splitmix64(state_); }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  int uniform_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

  // standard normal via Box-Muller
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 6.28318530717958647692 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  // Beta(0.5, 0.5) via the arcsine-law closed form.
  double beta_half_half() {
    double s = std::sin(1.57079632679489661923 * uniform());
    return s * s;
  }

  // Independent stream derived from this generator's seed lineage.
  Rng fork(std::uint64_t stream) const { return Rng(hash_combine(state_, stream)); }

  std::uint64_t state() const { return state_; }
  bool has_spare() const { return has_spare_; }
  double spare() const { return spare_; }
  void restore(std::uint64_t state, bool has_spare, double spare) {
    state_ = state;
    has_spare_ = has_spare;
    spare_ = spare;
  }

 private:
  std::uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace osseg
