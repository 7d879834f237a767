#pragma once

// Deterministic, platform-independent random helpers. Every stochastic
// component derives its stream from an explicit 64-bit seed so that runs are
// reproducible bit-for-bit from (seed, config).

#include <cstdint>
#include <initializer_list>

namespace agentrl::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Combine several integers into one seed (order-sensitive).
inline constexpr std::uint64_t derive(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x6A09E667F3BCC909ULL;
  for (auto p : parts) h = splitmix64(h ^ splitmix64(p));
  return h;
}

// Uniform double in [0, 1) from the top 53 bits.
inline constexpr double to_unit(std::uint64_t x) {
  return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// Small sequential generator; the state is just a counter run through splitmix.
class Stream {
 public:
  explicit constexpr Stream(std::uint64_t seed) : state_(seed) {}

  constexpr std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return splitmix64(state_);
  }
  constexpr double uniform() { return to_unit(next()); }
  constexpr bool bernoulli(double p) { return uniform() < p; }
  // Uniform integer in [0, n).
  constexpr std::uint64_t below(std::uint64_t n) {
    return n == 0 ? 0 : static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
  }

 private:
  std::uint64_t state_;
};

}  // namespace agentrl::rng
