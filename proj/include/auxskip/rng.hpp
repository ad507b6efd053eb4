#pragma once

// Seeded random streams. Every random draw in the engine flows from one
// top-level seed split into named sub-streams ("data", "init", "search",
// "directions", ...): stream(seed, name) seeds a mt19937_64 with
// splitmix64(seed ^ fnv1a(name)). Uniform and normal variates are derived
// from the raw 64-bit output so results do not depend on the standard
// library's distribution implementations.

#include <cstdint>
#include <random>
#include <string_view>

namespace auxskip {

std::uint64_t fnv1a64(std::string_view text);
std::uint64_t splitmix64(std::uint64_t x);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}
  Rng(std::uint64_t seed, std::string_view stream) : engine_(splitmix64(seed ^ fnv1a64(stream))) {}

  std::uint64_t next() { return engine_(); }
  // [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) std::swap(first[i - 1], first[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace auxskip
