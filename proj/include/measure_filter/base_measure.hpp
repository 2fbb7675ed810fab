#pragma once

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <type_traits>
#include <variant>

#include "measure_filter/errors.hpp"

namespace measure_filter {

struct UniformP0 {
  double a = 0.0;
  double b = 1.0;
};

struct GaussianP0 {
  double mu = 0.0;
  double var = 1.0;
};

using CenteringDistribution = std::variant<UniformP0, GaussianP0>;

/// alpha = theta * P0 with P0 nonatomic on the real line.
struct BaseMeasure {
  double theta = 1.0;
  CenteringDistribution p0 = UniformP0{};

  void validate() const {
    if (!(theta > 0.0) || !std::isfinite(theta)) throw ConfigError("theta", "theta must be a finite number > 0");
    if (const auto* u = std::get_if<UniformP0>(&p0)) {
      if (!(u->a < u->b) || !std::isfinite(u->a) || !std::isfinite(u->b)) {
        throw ConfigError("p0", "uniform p0 requires finite a < b");
      }
    } else {
      const auto& g = std::get<GaussianP0>(p0);
      if (!std::isfinite(g.mu) || !(g.var > 0.0) || !std::isfinite(g.var)) {
        throw ConfigError("p0", "gaussian p0 requires finite mu and var > 0");
      }
    }
  }

  double density(double y) const {
    return std::visit(
        [y](const auto& d) -> double {
          using D = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<D, UniformP0>) {
            return (y >= d.a && y <= d.b) ? 1.0 / (d.b - d.a) : 0.0;
          } else {
            const double z = y - d.mu;
            return std::exp(-0.5 * z * z / d.var) / std::sqrt(2.0 * std::numbers::pi * d.var);
          }
        },
        p0);
  }

  double cdf(double y) const {
    return std::visit(
        [y](const auto& d) -> double {
          using D = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<D, UniformP0>) {
            if (y <= d.a) return 0.0;
            if (y >= d.b) return 1.0;
            return (y - d.a) / (d.b - d.a);
          } else {
            return 0.5 * std::erfc(-(y - d.mu) / std::sqrt(2.0 * d.var));
          }
        },
        p0);
  }

  /// P0((lo, hi]).
  double mass(double lo, double hi) const { return hi <= lo ? 0.0 : cdf(hi) - cdf(lo); }

  template <typename Rng>
  double sample(Rng& rng) const {
    return std::visit(
        [&rng](const auto& d) -> double {
          using D = std::decay_t<decltype(d)>;
          if constexpr (std::is_same_v<D, UniformP0>) {
            return std::uniform_real_distribution<double>(d.a, d.b)(rng);
          } else {
            return std::normal_distribution<double>(d.mu, std::sqrt(d.var))(rng);
          }
        },
        p0);
  }
};

}  // namespace measure_filter
