#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace henet {

// Deterministic random source. Every draw is derived explicitly from the
// mt19937 word stream, so sequences are identical across platforms and
// standard libraries for a given seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed)
      : gen_(static_cast<std::uint32_t>(seed ^ (seed >> 32))) {}

  std::uint32_t next_u32() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return next_u32() * (1.0 / 4294967296.0); }

  // Uniform integer in [0, n). n == 0 yields 0.
  std::uint32_t uniform_int(std::uint32_t n) {
    return n == 0 ? 0u : next_u32() % n;
  }

  bool coin_flip() { return (next_u32() & 1u) != 0u; }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Fisher-Yates shuffle driven by Rng so epoch order is reproducible.
template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_int(static_cast<std::uint32_t>(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace henet
