#pragma once

// Seeded random streams. A stream can derive named children whose state
// depends only on the parent's seed and the tag, never on how many draws the
// parent (or a sibling) has made.

#include <cstdint>
#include <numeric>
#include <random>
#include <string_view>
#include <vector>

#include "vinn/tensor.hpp"

namespace vinn {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const noexcept { return seed_; }

  /// Independent stream for a named consumer.
  Rng child(std::string_view tag) const { return Rng(mix(seed_ ^ fnv1a(tag))); }
  Rng child(std::string_view tag, std::uint64_t index) const {
    return Rng(mix(mix(seed_ ^ fnv1a(tag)) + index));
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double a, double b) { return std::uniform_real_distribution<double>(a, b)(engine_); }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }

  Tensor normal_tensor(Shape shape, double mean = 0.0, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.mutable_values()) v = normal(mean, stddev);
    return t;
  }

  Tensor uniform_tensor(Shape shape, double a, double b) {
    Tensor t(std::move(shape));
    for (double& v : t.mutable_values()) v = uniform(a, b);
    return t;
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    std::shuffle(p.begin(), p.end(), engine_);
    return p;
  }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace vinn
