#pragma once

// Dual processes: the death process on the multiplicity lattice that drives
// the mixture weights, and the deterministic component S_t of the gamma dual.

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <tuple>
#include <utility>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/random/exponential_distribution.hpp>

#include "measure_filter/errors.hpp"
#include "measure_filter/multiplicity.hpp"
#include "measure_filter/numeric.hpp"

namespace measure_filter {

struct FvDualParams {
  double theta = 1.0;
  double sigma_speed = 1.0;

  void validate() const {
    if (!(theta > 0.0) || !std::isfinite(theta)) throw PreconditionError("theta must be > 0");
    if (!(sigma_speed > 0.0) || !std::isfinite(sigma_speed)) throw PreconditionError("sigma_speed must be > 0");
  }
};

struct DwDualParams {
  double theta = 1.0;
  double beta = 1.0;
  double sigma_speed = 1.0;

  void validate() const {
    if (!(theta > 0.0) || !std::isfinite(theta)) throw PreconditionError("theta must be > 0");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw PreconditionError("beta must be > 0");
    if (!(sigma_speed > 0.0) || !std::isfinite(sigma_speed)) throw PreconditionError("sigma_speed must be > 0");
  }
};

/// Deterministic dual component: the gamma rate of the filter is beta + s.
struct DualTimeState {
  double s = 0.0;
};

/// Where the binomial factor of the gamma death kernel is evaluated.
enum class BinomialConvention {
  survivor,       // Bin(|n|; |m|, p(t)), the count of surviving lineages
  paper_literal,  // Bin(|m|-|n|; |m|, p(t)), as displayed in the propagation theorem
};

/// Death rate out of level n: n (theta + n - 1) / 2.
inline double lambda_rate(std::uint64_t n, double theta) {
  const double nd = static_cast<double>(n);
  return nd * (theta + nd - 1.0) / 2.0;
}

struct BlockCoeff {
  double value = 0.0;     // clamped, nonnegative
  double raw = 0.0;       // before clamping, from the path that produced `value`
  bool extended = false;  // recomputed in multiprecision
  unsigned digits = 16;   // decimal digits of the working precision
};

struct BlockCoeffOptions {
  /// Switch to multiprecision when max|term| exceeds this multiple of |sum|.
  double max_term_ratio = 1e12;
  /// Switch to multiprecision when max|term| exceeds this absolute size.
  double max_term_abs = 1e4;
  /// Results in (-clamp_tolerance, 0) are clamped to 0.
  double clamp_tolerance = 1e-9;
  /// Guard digits kept above log10(max|term|) in the extended path.
  unsigned guard_digits = 30;
};

namespace detail {

template <unsigned Digits>
using mp_float = boost::multiprecision::number<boost::multiprecision::backends::cpp_bin_float<Digits>,
                                               boost::multiprecision::et_off>;

/// Alternating sum for C_{total, total-dead}(tau) in working type Real.
/// Term j carries sign (-1)^(j+dead) once the difference product is taken in
/// absolute value.
template <typename Real>
Real block_coeff_sum(std::uint64_t total, std::uint64_t dead, double tau, double theta_d) {
  const Real theta(theta_d);
  auto lambda = [&](std::uint64_t n) {
    const Real nr(static_cast<double>(n));
    return nr * (theta + nr - Real(1)) / Real(2);
  };
  std::vector<Real> lambdas(dead + 1);
  for (std::uint64_t h = 0; h <= dead; ++h) lambdas[h] = lambda(total - h);
  Real prefactor(1);
  for (std::uint64_t h = 0; h < dead; ++h) prefactor *= lambdas[h];
  CompensatedSum<Real> acc;
  const Real tau_r(tau);
  for (std::uint64_t j = 0; j <= dead; ++j) {
    Real denom(1);
    for (std::uint64_t h = 0; h <= dead; ++h) {
      if (h == j) continue;
      denom *= (lambdas[j] > lambdas[h]) ? (lambdas[j] - lambdas[h]) : (lambdas[h] - lambdas[j]);
    }
    using std::exp;
    Real term = prefactor * exp(-lambdas[j] * tau_r) / denom;
    if ((j + dead) % 2 == 1) term = -term;
    acc.add(term);
  }
  return acc.value();
}

struct TermMagnitude {
  double max_log10 = -std::numeric_limits<double>::infinity();
};

inline TermMagnitude block_coeff_magnitude(std::uint64_t total, std::uint64_t dead, double tau, double theta) {
  TermMagnitude out;
  double log_prefactor = 0.0;
  for (std::uint64_t h = 0; h < dead; ++h) log_prefactor += std::log(lambda_rate(total - h, theta));
  for (std::uint64_t j = 0; j <= dead; ++j) {
    const double lj = lambda_rate(total - j, theta);
    double log_denom = 0.0;
    for (std::uint64_t h = 0; h <= dead; ++h) {
      if (h != j) log_denom += std::log(std::abs(lj - lambda_rate(total - h, theta)));
    }
    const double log_term = log_prefactor - lj * tau - log_denom;
    out.max_log10 = std::max(out.max_log10, log_term / std::log(10.0));
  }
  return out;
}

template <unsigned Digits>
double block_coeff_extended(std::uint64_t total, std::uint64_t dead, double tau, double theta) {
  return static_cast<double>(block_coeff_sum<mp_float<Digits>>(total, dead, tau, theta));
}

}  // namespace detail

/// C_{total, total-dead}(t): probability that the death process started at
/// level `total` has lost exactly `dead` lineages by effective time sigma*t.
/// Evaluated from the alternating closed form, with automatic escalation to
/// multiprecision when cancellation would cost absolute accuracy.
inline BlockCoeff block_coeff_detailed(std::uint64_t total, std::uint64_t dead, double t, const FvDualParams& params,
                                       const BlockCoeffOptions& options = {}) {
  params.validate();
  if (dead == 0 || dead > total) throw PreconditionError("block_coeff requires 0 < dead <= total");
  if (!(t >= 0.0)) throw PreconditionError("block_coeff requires t >= 0");
  const double tau = params.sigma_speed * t;
  if (tau == 0.0) return BlockCoeff{0.0, 0.0, false, 16};
  if (std::isinf(tau)) {
    const double v = dead == total ? 1.0 : 0.0;
    return BlockCoeff{v, v, false, 16};
  }

  const auto magnitude = detail::block_coeff_magnitude(total, dead, tau, params.theta);
  const double max_term = std::pow(10.0, magnitude.max_log10);
  const double quick = detail::block_coeff_sum<double>(total, dead, tau, params.theta);
  BlockCoeff out{quick, quick, false, 16};
  const bool cancellation = max_term > options.max_term_ratio * std::abs(quick);
  const bool large_terms = max_term > options.max_term_abs;
  if (cancellation || large_terms || quick <= -options.clamp_tolerance || !std::isfinite(quick)) {
    const double needed = std::max(0.0, magnitude.max_log10) + options.guard_digits;
    if (needed <= 50) {
      out.raw = detail::block_coeff_extended<50>(total, dead, tau, params.theta);
      out.digits = 50;
    } else if (needed <= 100) {
      out.raw = detail::block_coeff_extended<100>(total, dead, tau, params.theta);
      out.digits = 100;
    } else if (needed <= 200) {
      out.raw = detail::block_coeff_extended<200>(total, dead, tau, params.theta);
      out.digits = 200;
    } else if (needed <= 400) {
      out.raw = detail::block_coeff_extended<400>(total, dead, tau, params.theta);
      out.digits = 400;
    } else {
      throw InstabilityError("block_coeff(" + std::to_string(total) + ", " + std::to_string(dead) +
                             "): terms of magnitude 1e" + std::to_string(static_cast<int>(magnitude.max_log10)) +
                             " exceed the supported precision");
    }
    out.extended = true;
  }
  if (out.raw < 0.0) {
    if (out.raw <= -options.clamp_tolerance) {
      throw InstabilityError("block_coeff(" + std::to_string(total) + ", " + std::to_string(dead) +
                             ") is negative after stabilisation: " + std::to_string(out.raw));
    }
    out.value = 0.0;
  } else {
    out.value = std::min(out.raw, 1.0);
  }
  return out;
}

inline double block_coeff(std::uint64_t total, std::uint64_t dead, double t, const FvDualParams& params) {
  return block_coeff_detailed(total, dead, t, params).value;
}

/// Probabilities of losing 0..total lineages from level `total` in time t.
inline std::vector<double> fv_level_probabilities(std::uint64_t total, double t, const FvDualParams& params) {
  std::vector<double> out(total + 1);
  out[0] = std::exp(-lambda_rate(total, params.theta) * params.sigma_speed * t);
  for (std::uint64_t dead = 1; dead <= total; ++dead) out[dead] = block_coeff(total, dead, t, params);
  return out;
}

/// Memo of level probabilities for one (theta, sigma, t), shared by every
/// component with the same total. Safe for concurrent use.
class LevelTable {
 public:
  LevelTable(const FvDualParams& params, double t) : params_(params), t_(t) { params_.validate(); }

  const std::vector<double>& row(std::uint64_t total) const {
    std::lock_guard lock(mutex_);
    auto it = rows_.find(total);
    if (it == rows_.end()) it = rows_.emplace(total, fv_level_probabilities(total, t_, params_)).first;
    return it->second;
  }

  void prepare(std::uint64_t max_total) const {
    for (std::uint64_t n = 0; n <= max_total; ++n) (void)row(n);
  }

 private:
  FvDualParams params_;
  double t_;
  mutable std::mutex mutex_;
  mutable std::map<std::uint64_t, std::vector<double>> rows_;
};

/// Transition probability p_{m,n}(t) of the lattice death process.
inline double fv_death_prob(const MultiplicityVector& m, const MultiplicityVector& n, double t,
                            const FvDualParams& params) {
  if (!leq(n, m)) throw PreconditionError("fv_death_prob requires n <= m");
  if (!(t >= 0.0)) throw PreconditionError("fv_death_prob requires t >= 0");
  params.validate();
  const std::uint64_t dead = m.total() - n.total();
  if (dead == 0) return std::exp(-lambda_rate(m.total(), params.theta) * params.sigma_speed * t);
  return block_coeff(m.total(), dead, t, params) * hypergeom_pmf(n, m);
}

/// Draws the number of surviving lineages at effective time sigma*t of the
/// death process entering from infinity.
///
/// The chain is simulated exactly from a finite level K down. The time it
/// takes to come down from infinity to K is a sum of independent exponentials
/// with rates lambda_k, k > K; it is drawn from the gamma law with the same
/// mean and variance. K is doubled from 16 until that entrance time has a
/// standard deviation below 1e-3 * tau and a mean plus ten standard deviations
/// below tau.
class LineageSampler {
 public:
  LineageSampler(double t, const FvDualParams& params) : params_(params) {
    params_.validate();
    if (!(t > 0.0)) throw PreconditionError("lineage sampling requires t > 0 (the count is infinite at t = 0)");
    tau_ = params_.sigma_speed * t;
    if (!std::isfinite(tau_)) throw PreconditionError("lineage sampling requires a finite time");
    start_ = 16;
    while (true) {
      std::tie(mean_, variance_) = entrance_moments(start_, params_.theta);
      const double sd = std::sqrt(variance_);
      if ((sd < 1e-3 * tau_ && mean_ + 10.0 * sd < tau_) || start_ >= (std::uint64_t{1} << 40)) break;
      start_ *= 2;
    }
  }

  /// Mean and variance of the time to come down from infinity to `level`.
  static std::pair<double, double> entrance_moments(std::uint64_t level, double theta) {
    constexpr std::uint64_t kTerms = 4096;
    CompensatedSum<> mean;
    CompensatedSum<> var;
    const std::uint64_t last = level + kTerms;
    for (std::uint64_t k = last; k > level; --k) {
      const double inv = 1.0 / lambda_rate(k, theta);
      mean.add(inv);
      var.add(inv * inv);
    }
    // Tails beyond `last` by the midpoint integral of 2 / (x (x + c)).
    const double x = static_cast<double>(last) + 0.5;
    const double c = theta - 1.0;
    const double mean_tail = std::abs(c) < 1e-8 ? 2.0 / x : 2.0 / c * std::log1p(c / x);
    mean.add(mean_tail);
    var.add(4.0 / (3.0 * x * x * x));
    return {mean.value(), var.value()};
  }

  std::uint64_t start_level() const noexcept { return start_; }
  double tau() const noexcept { return tau_; }

  template <typename Rng>
  std::uint64_t operator()(Rng& rng) const {
    const double shape = mean_ * mean_ / variance_;
    const double scale = variance_ / mean_;
    double clock = std::gamma_distribution<double>(shape, scale)(rng);
    std::uint64_t level = start_;
    if (clock > tau_) return level;
    boost::random::exponential_distribution<double> unit_exp(1.0);
    while (level > 0) {
      clock += unit_exp(rng) / lambda_rate(level, params_.theta);
      if (clock > tau_) return level;
      --level;
    }
    return 0;
  }

 private:
  FvDualParams params_;
  double tau_ = 0.0;
  std::uint64_t start_ = 16;
  double mean_ = 0.0;
  double variance_ = 0.0;
};

template <typename Rng>
std::uint64_t sample_lineage_count(double t, const FvDualParams& params, Rng& rng) {
  return LineageSampler(t, params)(rng);
}

struct SDecay {
  DualTimeState state;
  double survival = 1.0;  // p(t) = S_t / S_0
};

/// Solves dS/dt = -S (beta + S) / 2 from S_0 = s0 over effective time sigma*t.
inline SDecay dw_s_decay(double s0, double t, const DwDualParams& params) {
  params.validate();
  if (!(s0 >= 0.0)) throw PreconditionError("dw_s_decay requires s0 >= 0");
  if (!(t >= 0.0)) throw PreconditionError("dw_s_decay requires t >= 0");
  if (t == 0.0) return SDecay{DualTimeState{s0}, 1.0};
  const double beta = params.beta;
  const double decay = std::exp(-beta * params.sigma_speed * t / 2.0);
  // S_t = beta s0 / ((beta + s0) e^{beta t/2} - s0), rewritten in e^{-beta t/2}.
  // At s0 = 0 the ratio S_t / s0 keeps its limit e^{-beta t/2}.
  const double survival = beta * decay / (beta + s0 * (1.0 - decay));
  return SDecay{DualTimeState{s0 * survival}, survival};
}

/// S*_t = beta / (e^{beta t / 2} - 1), the rate offset of the exact gamma transition.
inline double dw_sstar(double t, const DwDualParams& params) {
  params.validate();
  if (!(t > 0.0)) throw PreconditionError("dw_sstar requires t > 0");
  return params.beta / std::expm1(params.beta * params.sigma_speed * t / 2.0);
}

/// Transition probability of the gamma-modulated death process from m to n
/// over time t, starting from the dual offset s0.
inline double dw_death_prob(const MultiplicityVector& m, const MultiplicityVector& n, double t, double s0,
                            const DwDualParams& params,
                            BinomialConvention convention = BinomialConvention::survivor) {
  if (!leq(n, m)) throw PreconditionError("dw_death_prob requires n <= m");
  if (t == 0.0 && convention == BinomialConvention::survivor) return n == m ? 1.0 : 0.0;
  const double p = dw_s_decay(s0, t, params).survival;
  const std::uint64_t k = convention == BinomialConvention::survivor ? n.total() : m.total() - n.total();
  return binom_pmf(k, m.total(), p) * hypergeom_pmf(n, m);
}

}  // namespace measure_filter
