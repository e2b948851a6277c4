#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace mdpose {

// Deterministic splitmix64 stream. The uniform/normal mappings are written
// out by hand so draws are identical across platforms and standard-library
// versions; std::<distribution> output is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed)) {}

  // Independent stream for (seed, stream, index). Generation code derives one
  // stream per sample index so samples can be produced in any order.
  static Rng derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
    Rng r(0);
    r.state_ = mix(seed) ^ mix(stream ^ 0x9e3779b97f4a7c15ull) ^ mix(index ^ 0xd1b54a32d192ed03ull);
    return r;
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // [0, n), n > 0. Multiply-shift; bias is ~n/2^64, irrelevant here.
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  static std::uint64_t mix(std::uint64_t x) {
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

 private:
  std::uint64_t state_;
};

}  // namespace mdpose
