#pragma once

// Update and prediction operators for Dawson-Watanabe signals.

#include <cmath>
#include <span>
#include <vector>

#include "measure_filter/dual.hpp"
#include "measure_filter/fv_filter.hpp"
#include "measure_filter/random_measures.hpp"

namespace measure_filter {

enum class DwWeightMode {
  full_marginal,  // Polya factor times the Poisson count marginal of each component
  paper_literal,  // Polya factor only
};

/// Bayes update with the points of one Poisson observation epoch. An empty
/// batch is informative: it says the total mass produced no points.
inline UpdateResult<DwFilterState> dw_update(const DwFilterState& state, std::span<const double> obs,
                                             DwWeightMode mode = DwWeightMode::full_marginal,
                                             const ExecutionOptions& exec = {}) {
  const auto batch = detail::resolve_batch(state.registry, state.base, obs);
  const double theta = state.theta();
  const double rate = state.beta + state.s;
  const double n = static_cast<double>(obs.size());
  const auto log_factor = detail::per_component(
      state.components, resolve_threads(exec.threads), [&](const MultiplicityVector& m) {
        double lf = detail::polya_log_factor(m, batch, theta);
        if (mode == DwWeightMode::full_marginal) {
          const double shape = theta + static_cast<double>(m.total());
          lf += log_rising(shape, n) + shape * (std::log(rate) - std::log(rate + 1.0)) - n * std::log(rate + 1.0);
        }
        return lf;
      });
  DwFilterState out = state;
  out.registry = batch.registry;
  const double log_ml = detail::reweight_and_shift(out.components, log_factor, batch.counts);
  out.s = state.s + 1.0;
  return {std::move(out), log_ml};
}

/// Propagates the state forward by dt; s follows the deterministic dual.
inline DwFilterState dw_predict(const DwFilterState& state, double dt,
                                BinomialConvention convention = BinomialConvention::survivor,
                                const ExecutionOptions& exec = {}) {
  if (!(dt >= 0.0)) throw PreconditionError("dw_predict requires dt >= 0");
  if (dt == 0.0) return state;
  const DwDualParams params{state.theta(), state.beta, state.sigma_speed};
  const SDecay decay = dw_s_decay(state.s, dt, params);
  const double p = decay.survival;
  std::map<std::uint64_t, std::vector<double>> binomial_rows;
  for (const auto& [m, w] : state.components) {
    auto& row = binomial_rows[m.total()];
    if (!row.empty()) continue;
    row.resize(m.total() + 1);
    for (std::uint64_t k = 0; k <= m.total(); ++k) row[k] = binom_pmf(k, m.total(), p);
  }
  DwFilterState out = state;
  out.s = decay.state.s;
  out.components = detail::propagate_components(
      state.components, resolve_threads(exec.threads), exec.limits,
      [&](const MultiplicityVector& m, const MultiplicityVector& n) {
        const auto& row = binomial_rows.at(m.total());
        const std::uint64_t k = convention == BinomialConvention::survivor ? n.total() : m.total() - n.total();
        const double b = row[k];
        if (b == 0.0) return 0.0;
        return n == m ? b : b * hypergeom_pmf(n, m);
      });
  return out;
}

struct DwFilterOptions {
  double prune_eps = 1e-8;
  DwWeightMode mode = DwWeightMode::full_marginal;
  BinomialConvention convention = BinomialConvention::survivor;
  ExecutionOptions exec{};
};

inline FilterResult<DwFilterState> dw_filter(const DwFilterState& prior, std::span<const Batch> data,
                                             const DwFilterOptions& options = {}) {
  return detail::run_filter(
      prior, data, options.prune_eps,
      [&](const DwFilterState& s, std::span<const double> obs) { return dw_update(s, obs, options.mode, options.exec); },
      [&](const DwFilterState& s, double dt) { return dw_predict(s, dt, options.convention, options.exec); });
}

}  // namespace measure_filter
