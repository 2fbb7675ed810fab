#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>

#include "measure_filter/errors.hpp"

namespace measure_filter {

namespace detail {

inline constexpr std::size_t kLogFactorialTableSize = 2048;

inline const std::array<double, kLogFactorialTableSize>& log_factorial_table() {
  static const std::array<double, kLogFactorialTableSize> table = [] {
    std::array<double, kLogFactorialTableSize> t{};
    t[0] = 0.0;
    for (std::size_t k = 1; k < t.size(); ++k) t[k] = std::lgamma(static_cast<double>(k) + 1.0);
    return t;
  }();
  return table;
}

}  // namespace detail

/// log(n!)
inline double log_factorial(std::uint64_t n) {
  if (n < detail::kLogFactorialTableSize) return detail::log_factorial_table()[n];
  return std::lgamma(static_cast<double>(n) + 1.0);
}

/// log C(n, k) through log-gamma; -inf outside 0 <= k <= n.
inline double log_choose(std::uint64_t n, std::uint64_t k) {
  if (k > n) return -std::numeric_limits<double>::infinity();
  return log_factorial(n) - log_factorial(k) - log_factorial(n - k);
}

/// Exact C(n, k) in integer arithmetic. Valid while the result fits in 64 bits
/// (every n <= 62); used as the cross-check path for small totals.
inline std::uint64_t choose_exact(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  if (n > 62) throw PreconditionError("choose_exact: n > 62 overflows");
  k = std::min(k, n - k);
  std::uint64_t result = 1;
  for (std::uint64_t j = 1; j <= k; ++j) {
    // result * (n - k + j) is divisible by j at every step.
    result = result * (n - k + j) / j;
  }
  return result;
}

/// log of the rising factorial a (a+1) ... (a+n-1).
inline double log_rising(double a, double n) { return std::lgamma(a + n) - std::lgamma(a); }

inline double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc);
}

/// Neumaier's compensated summation.
template <typename T = double>
class CompensatedSum {
 public:
  void add(T x) {
    using std::abs;
    const T t = sum_ + x;
    if (abs(sum_) >= abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  T value() const { return sum_ + comp_; }

 private:
  T sum_{0};
  T comp_{0};
};

}  // namespace measure_filter
