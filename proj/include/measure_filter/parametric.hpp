#pragma once

// Finite-dimensional filters: mixtures of Dirichlet distributions driven by a
// K-type Wright-Fisher signal and mixtures of independent gamma products
// driven by K independent CIR signals.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "measure_filter/dual.hpp"
#include "measure_filter/errors.hpp"
#include "measure_filter/multiplicity.hpp"
#include "measure_filter/numeric.hpp"

namespace measure_filter {

using CountVector = std::vector<Count>;
using DenseComponents = std::map<CountVector, double>;

/// sum_m w_m Dirichlet(alpha + m).
struct DirichletMixture {
  std::vector<double> alpha;
  DenseComponents components;

  double theta() const { return std::accumulate(alpha.begin(), alpha.end(), 0.0); }
  std::size_t dimension() const { return alpha.size(); }

  static DirichletMixture prior(std::vector<double> alpha) {
    DirichletMixture mix{std::move(alpha), {}};
    mix.components[CountVector(mix.alpha.size(), 0)] = 1.0;
    return mix;
  }
};

/// sum_m w_m prod_j Ga(alpha_j + m_j, beta + s).
struct GammaMixture {
  std::vector<double> alpha;
  double beta = 1.0;
  double s = 0.0;
  DenseComponents components;

  double theta() const { return std::accumulate(alpha.begin(), alpha.end(), 0.0); }
  std::size_t dimension() const { return alpha.size(); }

  static GammaMixture prior(std::vector<double> alpha, double beta) {
    GammaMixture mix{std::move(alpha), beta, 0.0, {}};
    mix.components[CountVector(mix.alpha.size(), 0)] = 1.0;
    return mix;
  }
};

template <typename State>
struct Updated {
  State state;
  double log_ml_increment = 0.0;
};

inline MultiplicityVector to_sparse(const CountVector& counts) {
  return MultiplicityVector::from_dense(std::span<const Count>(counts));
}

inline CountVector to_dense(const MultiplicityVector& m, std::size_t k) {
  if (m.dimension() > k) throw PreconditionError("multiplicity vector exceeds the mixture dimension");
  return m.to_dense(k);
}

inline std::uint64_t total_of(const CountVector& m) {
  return std::accumulate(m.begin(), m.end(), std::uint64_t{0});
}

namespace detail {

inline void validate_positive(std::span<const double> alpha, const char* what) {
  if (alpha.empty()) throw PreconditionError(std::string(what) + " must be non-empty");
  for (double a : alpha) {
    if (!(a > 0.0) || !std::isfinite(a)) throw PreconditionError(std::string(what) + " entries must be > 0");
  }
}

/// Reweights by exp(log_factor[m]) and renormalises; returns the log normaliser.
inline double reweight(DenseComponents& components, const std::map<CountVector, double>& log_factor) {
  std::vector<double> logs;
  logs.reserve(components.size());
  for (const auto& [m, w] : components) logs.push_back(std::log(w) + log_factor.at(m));
  const double log_norm = log_sum_exp(logs);
  std::size_t j = 0;
  for (auto& [m, w] : components) w = std::exp(logs[j++] - log_norm);
  return log_norm;
}

inline void normalise(DenseComponents& components) {
  CompensatedSum<> total;
  for (const auto& [m, w] : components) total.add(w);
  const double z = total.value();
  for (auto it = components.begin(); it != components.end();) {
    if (it->second <= 0.0) {
      it = components.erase(it);
    } else {
      it->second /= z;
      ++it;
    }
  }
}

}  // namespace detail

/// Bayes update of a Dirichlet mixture with multinomial category counts
/// (an ordered sample; the multinomial coefficient is common to all components).
inline Updated<DirichletMixture> wf_update(const DirichletMixture& mix, const CountVector& counts) {
  detail::validate_positive(mix.alpha, "alpha");
  if (counts.size() != mix.dimension()) throw PreconditionError("wf_update: dimension mismatch");
  const double theta = mix.theta();
  const auto added = total_of(counts);
  if (added == 0) return {mix, 0.0};

  std::map<CountVector, double> log_factor;
  for (const auto& [m, w] : mix.components) {
    double lf = -log_rising(theta + static_cast<double>(total_of(m)), static_cast<double>(added));
    for (std::size_t j = 0; j < counts.size(); ++j) {
      lf += log_rising(mix.alpha[j] + m[j], counts[j]);
    }
    log_factor[m] = lf;
  }
  DirichletMixture out{mix.alpha, mix.components};
  const double log_ml = detail::reweight(out.components, log_factor);
  DenseComponents shifted;
  for (const auto& [m, w] : out.components) {
    CountVector n = m;
    for (std::size_t j = 0; j < n.size(); ++j) n[j] += counts[j];
    shifted.emplace(std::move(n), w);
  }
  out.components = std::move(shifted);
  return {std::move(out), log_ml};
}

/// Propagates a Dirichlet mixture through the K-type WF transition over
/// effective time sigma*t.
inline DirichletMixture wf_predict(const DirichletMixture& mix, double t, double sigma_speed = 1.0) {
  detail::validate_positive(mix.alpha, "alpha");
  if (!(t >= 0.0)) throw PreconditionError("wf_predict requires t >= 0");
  if (t == 0.0) return mix;
  const FvDualParams params{mix.theta(), sigma_speed};
  const LevelTable levels(params, t);
  DirichletMixture out{mix.alpha, {}};
  for (const auto& [m, w] : mix.components) {
    const MultiplicityVector sparse = to_sparse(m);
    const auto& row = levels.row(sparse.total());
    for_each_below(sparse, [&](const MultiplicityVector& n) {
      const std::uint64_t dead = sparse.total() - n.total();
      const double p = dead == 0 ? row[0] : row[dead] * hypergeom_pmf(n, sparse);
      if (p > 0.0) out.components[to_dense(n, mix.dimension())] += w * p;
    });
  }
  detail::normalise(out.components);
  return out;
}

/// Bayes update of independent gamma products after `events` Poisson
/// observations whose per-cell totals are `counts`.
inline Updated<GammaMixture> multi_cir_update(const GammaMixture& mix, const CountVector& counts,
                                              std::uint64_t events = 1) {
  detail::validate_positive(mix.alpha, "alpha");
  if (counts.size() != mix.dimension()) throw PreconditionError("multi_cir_update: dimension mismatch");
  if (events == 0) {
    if (total_of(counts) != 0) throw PreconditionError("positive counts require at least one observation event");
    return {mix, 0.0};
  }
  const double rate_before = mix.beta + mix.s;
  const double rate_after = rate_before + static_cast<double>(events);
  std::map<CountVector, double> log_factor;
  for (const auto& [m, w] : mix.components) {
    double lf = 0.0;
    for (std::size_t j = 0; j < counts.size(); ++j) {
      const double shape = mix.alpha[j] + m[j];
      lf += log_rising(shape, counts[j]) + shape * std::log(rate_before) -
            (shape + counts[j]) * std::log(rate_after);
    }
    log_factor[m] = lf;
  }
  GammaMixture out = mix;
  const double log_ml = detail::reweight(out.components, log_factor);
  DenseComponents shifted;
  for (const auto& [m, w] : out.components) {
    CountVector n = m;
    for (std::size_t j = 0; j < n.size(); ++j) n[j] += counts[j];
    shifted.emplace(std::move(n), w);
  }
  out.components = std::move(shifted);
  out.s += static_cast<double>(events);
  return {std::move(out), log_ml};
}

/// One-dimensional update: n Poisson observations with total count y.
inline Updated<GammaMixture> cir_update(const GammaMixture& mix, std::uint64_t n, std::uint64_t y) {
  if (mix.dimension() != 1) throw PreconditionError("cir_update expects a one-dimensional mixture");
  return multi_cir_update(mix, CountVector{static_cast<Count>(y)}, n);
}

/// Propagates independent CIR components over effective time sigma*t. The
/// surviving counts are Bin(|n|; |m|, p(t)) times hypergeometric, which is the
/// product of K one-dimensional binomial thinnings.
inline GammaMixture multi_cir_predict(const GammaMixture& mix, double t, double sigma_speed = 1.0,
                                      BinomialConvention convention = BinomialConvention::survivor) {
  detail::validate_positive(mix.alpha, "alpha");
  if (!(t >= 0.0)) throw PreconditionError("cir_predict requires t >= 0");
  if (t == 0.0) return mix;
  const DwDualParams params{mix.theta(), mix.beta, sigma_speed};
  GammaMixture out{mix.alpha, mix.beta, dw_s_decay(mix.s, t, params).state.s, {}};
  for (const auto& [m, w] : mix.components) {
    const MultiplicityVector sparse = to_sparse(m);
    for_each_below(sparse, [&](const MultiplicityVector& n) {
      const double p = dw_death_prob(sparse, n, t, mix.s, params, convention);
      if (p > 0.0) out.components[to_dense(n, mix.dimension())] += w * p;
    });
  }
  detail::normalise(out.components);
  return out;
}

inline GammaMixture cir_predict(const GammaMixture& mix, double t, double sigma_speed = 1.0) {
  if (mix.dimension() != 1) throw PreconditionError("cir_predict expects a one-dimensional mixture");
  return multi_cir_predict(mix, t, sigma_speed);
}

/// Posterior mean of each simplex coordinate.
inline std::vector<double> wf_mean(const DirichletMixture& mix) {
  const double theta = mix.theta();
  std::vector<double> mean(mix.dimension(), 0.0);
  for (const auto& [m, w] : mix.components) {
    const double denom = theta + static_cast<double>(total_of(m));
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += w * (mix.alpha[j] + m[j]) / denom;
  }
  return mean;
}

struct MeanVariance {
  double mean = 0.0;
  double variance = 0.0;
};

/// Mean and variance of one coordinate of a gamma mixture.
inline MeanVariance gamma_mean_variance(const GammaMixture& mix, std::size_t coordinate = 0) {
  const double rate = mix.beta + mix.s;
  double first = 0.0;
  double second = 0.0;
  for (const auto& [m, w] : mix.components) {
    const double shape = mix.alpha.at(coordinate) + m[coordinate];
    first += w * shape / rate;
    second += w * shape * (shape + 1.0) / (rate * rate);
  }
  return {first, second - first * first};
}

// Filters on finite-dimensional data.

/// Multinomial category counts observed at time t.
struct CategoryBatch {
  double t = 0.0;
  CountVector counts;
};

/// Poisson counts observed at time t; each entry is one observation event.
struct PoissonBatch {
  double t = 0.0;
  std::vector<Count> values;
};

struct ParametricStepRecord {
  double t = 0.0;
  double log_ml_increment = 0.0;
  std::size_t components_before_prune = 1;
  std::size_t components_after_prune = 1;
  double pruned_mass = 0.0;
  double weight_fullinfo = 1.0;
  double weight_prior = 1.0;
};

template <typename Mixture>
double prune_dense(Mixture& mix, double eps) {
  if (eps <= 0.0 || mix.components.size() <= 1) return 0.0;
  auto largest = std::max_element(mix.components.begin(), mix.components.end(),
                                  [](const auto& a, const auto& b) { return a.second < b.second; });
  const CountVector keep = largest->first;
  double dropped = 0.0;
  for (auto it = mix.components.begin(); it != mix.components.end();) {
    if (it->second < eps && it->first != keep) {
      dropped += it->second;
      it = mix.components.erase(it);
    } else {
      ++it;
    }
  }
  detail::normalise(mix.components);
  return dropped;
}

/// Key of the component with the largest total (ties: largest key).
template <typename Mixture>
CountVector fullinfo_key(const Mixture& mix) {
  const CountVector* best = nullptr;
  std::uint64_t best_total = 0;
  for (const auto& [m, w] : mix.components) {
    const auto total = total_of(m);
    if (!best || total > best_total || (total == best_total && m > *best)) {
      best = &m;
      best_total = total;
    }
  }
  return best ? *best : CountVector{};
}

/// Weight of the tracked full-information component and of the origin; 0 when pruned.
template <typename Mixture>
std::pair<double, double> fullinfo_and_prior_weights(const Mixture& mix, const CountVector& fullinfo) {
  double full_w = 0.0;
  double prior_w = 0.0;
  for (const auto& [m, w] : mix.components) {
    if (m == fullinfo) full_w = w;
    if (total_of(m) == 0) prior_w = w;
  }
  return {full_w, prior_w};
}

namespace detail {

inline void check_times(double previous, double current, bool first) {
  if (!std::isfinite(current)) throw NonMonotoneTimesError("observation time is not finite");
  if (!first && !(current > previous)) {
    throw NonMonotoneTimesError("observation times must be strictly increasing");
  }
}

}  // namespace detail

template <typename Mixture>
struct FilterRun {
  std::vector<ParametricStepRecord> records;
  std::vector<Mixture> posteriors;
  double total_log_ml = 0.0;
};

inline FilterRun<DirichletMixture> wf_filter(const DirichletMixture& prior, std::span<const CategoryBatch> data,
                                             double sigma_speed = 1.0, double prune_eps = 0.0) {
  FilterRun<DirichletMixture> run;
  DirichletMixture state = prior;
  CountVector fullinfo;
  double cumulative_pruned = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    detail::check_times(j ? data[j - 1].t : 0.0, data[j].t, j == 0);
    ParametricStepRecord rec;
    rec.t = data[j].t;
    if (j > 0) {
      state = wf_predict(state, data[j].t - data[j - 1].t, sigma_speed);
      rec.components_before_prune = state.components.size();
      cumulative_pruned += prune_dense(state, prune_eps);
    } else {
      rec.components_before_prune = state.components.size();
    }
    rec.components_after_prune = state.components.size();
    auto updated = wf_update(state, data[j].counts);
    state = std::move(updated.state);
    rec.log_ml_increment = updated.log_ml_increment;
    rec.pruned_mass = cumulative_pruned;
    if (j == 0 || total_of(data[j].counts) > 0) fullinfo = fullinfo_key(state);
    std::tie(rec.weight_fullinfo, rec.weight_prior) = fullinfo_and_prior_weights(state, fullinfo);
    run.total_log_ml += rec.log_ml_increment;
    run.records.push_back(rec);
    run.posteriors.push_back(state);
  }
  return run;
}

/// One-dimensional CIR filter. Batches with no values are pure propagation
/// points; they trace the weight trajectories between updates.
inline FilterRun<GammaMixture> cir_filter(const GammaMixture& prior, std::span<const PoissonBatch> data,
                                          double sigma_speed = 1.0, double prune_eps = 0.0) {
  if (prior.dimension() != 1) throw PreconditionError("cir_filter expects a one-dimensional prior");
  FilterRun<GammaMixture> run;
  GammaMixture state = prior;
  CountVector fullinfo;
  double cumulative_pruned = 0.0;
  for (std::size_t j = 0; j < data.size(); ++j) {
    detail::check_times(j ? data[j - 1].t : 0.0, data[j].t, j == 0);
    ParametricStepRecord rec;
    rec.t = data[j].t;
    if (j > 0) {
      state = cir_predict(state, data[j].t - data[j - 1].t, sigma_speed);
      rec.components_before_prune = state.components.size();
      cumulative_pruned += prune_dense(state, prune_eps);
    } else {
      rec.components_before_prune = state.components.size();
    }
    rec.components_after_prune = state.components.size();
    const auto& values = data[j].values;
    const std::uint64_t y = std::accumulate(values.begin(), values.end(), std::uint64_t{0});
    auto updated = cir_update(state, values.size(), y);
    state = std::move(updated.state);
    rec.log_ml_increment = updated.log_ml_increment;
    rec.pruned_mass = cumulative_pruned;
    if (j == 0 || !values.empty()) fullinfo = fullinfo_key(state);
    std::tie(rec.weight_fullinfo, rec.weight_prior) = fullinfo_and_prior_weights(state, fullinfo);
    run.total_log_ml += rec.log_ml_increment;
    run.records.push_back(rec);
    run.posteriors.push_back(state);
  }
  return run;
}

}  // namespace measure_filter
