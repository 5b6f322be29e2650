#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace timae {

/// Stable 64-bit seed derived from (seed, purpose). Used to give every
/// stochastic stage its own stream from a single run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);

/// Seedable generator passed explicitly to every stochastic operation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  bool bernoulli(double p) { return uniform() < p; }

  Rng derive(std::string_view purpose) const { return Rng(derive_seed(seed_, purpose)); }

  std::mt19937_64& engine() { return engine_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

}  // namespace timae
