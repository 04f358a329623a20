#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace inamp {

namespace detail {

// FNV-1a, used to derive independent stream seeds from names.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d4a2b9a2b5ce96ull;
  return x ^ (x >> 31);
}

}  // namespace detail

/// A named, seeded random stream. Streams derived from the same global seed
/// but different (name, index) pairs are independent sequences, so every
/// stochastic choice in the pipeline is a pure function of
/// (seed, stream id, draw index).
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0)
      : engine_(detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a(name) + 0x632be59bd9b4e019ull * index))) {}

  std::mt19937_64& engine() { return engine_; }

  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(engine_);
  }

  double normal(double mean, double stddev) {
    std::normal_distribution<double> d(mean, stddev);
    return d(engine_);
  }

  bool bernoulli(double p = 0.5) {
    std::bernoulli_distribution d(p);
    return d(engine_);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
    return d(engine_);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), engine_);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace inamp
