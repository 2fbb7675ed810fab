#pragma once

// Keyed pseudorandom streams. A stream is identified by (seed, epoch, index),
// so any draw can be reproduced without replaying the draws before it and
// parallel work gets independent streams regardless of thread count.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

namespace measure_filter {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// xoshiro256++ seeded by hashing the key through splitmix64.
class KeyedStream {
 public:
  using result_type = std::uint64_t;

  explicit KeyedStream(std::uint64_t seed, std::uint64_t epoch = 0, std::uint64_t index = 0) {
    std::uint64_t mix = seed;
    mix = splitmix64(mix) ^ epoch;
    mix = splitmix64(mix) ^ index;
    for (auto& word : state_) word = splitmix64(mix);
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on (0, 1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t state_[4];
};

template <typename Rng>
double draw_gamma(double shape, double rate, Rng& rng) {
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  return dist(rng);
}

template <typename Rng>
std::uint64_t draw_poisson(double mean, Rng& rng) {
  if (mean <= 0.0) return 0;
  std::poisson_distribution<std::uint64_t> dist(mean);
  return dist(rng);
}

template <typename Rng>
std::vector<double> draw_dirichlet(std::span<const double> alpha, Rng& rng) {
  std::vector<double> x(alpha.size());
  double total = 0.0;
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    x[j] = draw_gamma(alpha[j], 1.0, rng);
    total += x[j];
  }
  for (auto& v : x) v /= total;
  return x;
}

/// Multinomial counts by sequential conditional binomials.
template <typename Rng>
std::vector<std::uint64_t> draw_multinomial(std::uint64_t n, std::span<const double> probs, Rng& rng) {
  std::vector<std::uint64_t> counts(probs.size(), 0);
  double remaining_mass = 1.0;
  std::uint64_t remaining = n;
  for (std::size_t j = 0; j + 1 < probs.size() && remaining > 0; ++j) {
    const double p = remaining_mass > 0.0 ? std::min(1.0, std::max(0.0, probs[j] / remaining_mass)) : 0.0;
    std::binomial_distribution<std::uint64_t> dist(remaining, p);
    counts[j] = dist(rng);
    remaining -= counts[j];
    remaining_mass -= probs[j];
  }
  if (!probs.empty()) counts.back() += remaining;
  return counts;
}

/// Index drawn with probability proportional to weights.
template <typename Rng>
std::size_t draw_categorical(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  for (std::size_t j = 0; j < weights.size(); ++j) {
    if (u < weights[j]) return j;
    u -= weights[j];
  }
  return weights.size() - 1;
}

}  // namespace measure_filter
