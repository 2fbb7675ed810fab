#pragma once

// Update and prediction operators for Fleming-Viot signals and the filtering
// recursion built from them.

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "measure_filter/dual.hpp"
#include "measure_filter/errors.hpp"
#include "measure_filter/multiplicity.hpp"
#include "measure_filter/numeric.hpp"
#include "measure_filter/parallel.hpp"
#include "measure_filter/random_measures.hpp"

namespace measure_filter {

struct ExecutionOptions {
  unsigned threads = 1;
  LatticeLimits limits{};
};

template <typename State>
struct UpdateResult {
  State state;
  double log_ml_increment = 0.0;
};

namespace detail {

/// Observations resolved against a registry: index per point and whether the
/// point was unseen before this batch.
struct ResolvedBatch {
  AtomRegistry registry;
  std::vector<AtomIndex> index;
  std::vector<double> fresh_log_density;  // log(theta p0(y)) per point
  MultiplicityVector counts;
};

inline ResolvedBatch resolve_batch(const AtomRegistry& registry, const BaseMeasure& base, std::span<const double> obs) {
  ResolvedBatch out{registry, {}, {}, {}};
  for (double y : obs) {
    const AtomIndex idx = out.registry.intern(y);
    out.index.push_back(idx);
    out.fresh_log_density.push_back(std::log(base.theta * base.density(y)));
    out.counts.add(idx, 1);
  }
  return out;
}

/// Sequential Polya log predictive of the batch under the component with
/// pseudo-counts m: a point at an atom with positive running count c adds
/// log c, any other point adds log(theta p0(y)), each over theta + |m| + j.
inline double polya_log_factor(const MultiplicityVector& m, const ResolvedBatch& batch, double theta) {
  double out = 0.0;
  std::map<AtomIndex, Count> seen;
  for (std::size_t j = 0; j < batch.index.size(); ++j) {
    const AtomIndex idx = batch.index[j];
    const double running = static_cast<double>(m[idx]) + static_cast<double>(seen[idx]);
    out += running > 0.0 ? std::log(running) : batch.fresh_log_density[j];
    out -= std::log(theta + static_cast<double>(m.total()) + static_cast<double>(j));
    ++seen[idx];
  }
  return out;
}

/// Reweights components by exp(log_factor), shifts every key by `shift` and
/// renormalises; returns the log normaliser.
inline double reweight_and_shift(ComponentMap& components, const std::vector<double>& log_factor,
                                 const MultiplicityVector& shift) {
  std::vector<double> logs;
  logs.reserve(components.size());
  std::size_t j = 0;
  for (const auto& [m, w] : components) logs.push_back(std::log(w) + log_factor[j++]);
  const double log_norm = log_sum_exp(logs);
  if (!std::isfinite(log_norm)) {
    throw PreconditionError("the batch has zero likelihood under every component (observation outside the P0 support?)");
  }
  ComponentMap out;
  j = 0;
  for (const auto& [m, w] : components) {
    const double nw = std::exp(logs[j++] - log_norm);
    if (nw > 0.0) out.emplace_hint(out.end(), t_update(shift, m), nw);
  }
  components = std::move(out);
  return log_norm;
}

template <typename Fn>
std::vector<double> per_component(const ComponentMap& components, unsigned threads, Fn&& fn) {
  std::vector<const MultiplicityVector*> keys;
  keys.reserve(components.size());
  for (const auto& entry : components) keys.push_back(&entry.first);
  std::vector<double> out(keys.size());
  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (keys.size() + kChunk - 1) / kChunk;
  parallel_chunks(chunks, threads, [&](std::size_t c) {
    const std::size_t end = std::min(keys.size(), (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) out[i] = fn(*keys[i]);
  });
  return out;
}

/// sum_m w_m K(m, n) over the down-set union, accumulated chunk by chunk in a
/// fixed order so the result does not depend on the thread count.
template <typename Kernel>
ComponentMap propagate_components(const ComponentMap& components, unsigned threads, const LatticeLimits& limits,
                                  Kernel&& kernel) {
  std::size_t bound = 0;
  for (const auto& [m, w] : components) {
    const std::size_t size = down_set_size(m);
    if (size > limits.max_down_set || bound > limits.max_down_set - size) {
      throw ResourceCapError("prediction would enumerate more than " + std::to_string(limits.max_down_set) +
                             " lattice points; raise prune_eps");
    }
    bound += size;
  }
  std::vector<std::pair<const MultiplicityVector*, double>> items;
  items.reserve(components.size());
  for (const auto& [m, w] : components) items.emplace_back(&m, w);
  constexpr std::size_t kChunk = 16;
  const std::size_t chunks = (items.size() + kChunk - 1) / kChunk;
  std::vector<ComponentMap> partial(chunks);
  parallel_chunks(chunks, threads, [&](std::size_t c) {
    const std::size_t end = std::min(items.size(), (c + 1) * kChunk);
    auto& acc = partial[c];
    for (std::size_t i = c * kChunk; i < end; ++i) {
      const auto& [m, w] = items[i];
      for_each_below(*m, [&](const MultiplicityVector& n) {
        const double p = kernel(*m, n);
        if (p > 0.0) acc[n] += w * p;
      });
    }
  });
  ComponentMap out;
  for (auto& part : partial) {
    for (auto& [n, v] : part) out[n] += v;
  }
  CompensatedSum<> total;
  for (const auto& [n, v] : out) total.add(v);
  const double z = total.value();
  for (auto it = out.begin(); it != out.end();) {
    if (it->second <= 0.0) {
      it = out.erase(it);
    } else {
      it->second /= z;
      ++it;
    }
  }
  return out;
}

}  // namespace detail

/// Bayes update with a batch of exchangeable observations.
inline UpdateResult<FvFilterState> fv_update(const FvFilterState& state, std::span<const double> obs,
                                             const ExecutionOptions& exec = {}) {
  if (obs.empty()) return {state, 0.0};
  const auto batch = detail::resolve_batch(state.registry, state.base, obs);
  const double theta = state.theta();
  const auto log_factor = detail::per_component(state.components, resolve_threads(exec.threads),
                                                [&](const MultiplicityVector& m) {
                                                  return detail::polya_log_factor(m, batch, theta);
                                                });
  FvFilterState out = state;
  out.registry = batch.registry;
  const double log_ml = detail::reweight_and_shift(out.components, log_factor, batch.counts);
  return {std::move(out), log_ml};
}

/// Propagates the state forward by dt (effective time sigma * dt).
inline FvFilterState fv_predict(const FvFilterState& state, double dt, const ExecutionOptions& exec = {}) {
  if (!(dt >= 0.0)) throw PreconditionError("fv_predict requires dt >= 0");
  if (dt == 0.0) return state;
  const FvDualParams params{state.theta(), state.sigma_speed};
  const LevelTable levels(params, dt);
  std::uint64_t max_total = 0;
  for (const auto& [m, w] : state.components) max_total = std::max(max_total, m.total());
  levels.prepare(max_total);
  FvFilterState out = state;
  out.components = detail::propagate_components(
      state.components, resolve_threads(exec.threads), exec.limits,
      [&](const MultiplicityVector& m, const MultiplicityVector& n) {
        const std::uint64_t dead = m.total() - n.total();
        const double level = levels.row(m.total())[dead];
        if (level == 0.0) return 0.0;
        return dead == 0 ? level : level * hypergeom_pmf(n, m);
      });
  return out;
}

template <typename State>
struct FilterStepRecord {
  double t = 0.0;
  double log_ml_increment = 0.0;
  std::size_t components_before_prune = 1;
  std::size_t components_after_prune = 1;
  double pruned_mass = 0.0;
  double weight_fullinfo = 1.0;
  double weight_prior = 1.0;
  std::shared_ptr<const State> state;
};

template <typename State>
struct FilterResult {
  std::vector<FilterStepRecord<State>> steps;
  double total_log_ml = 0.0;
};

/// One observation epoch: time and the values observed then.
struct Batch {
  double t = 0.0;
  std::vector<double> obs;
};

namespace detail {

template <typename State, typename Update, typename Predict>
FilterResult<State> run_filter(const State& prior, std::span<const Batch> data, double prune_eps, Update&& update,
                               Predict&& predict) {
  if (!(prune_eps >= 0.0 && prune_eps < 1.0)) throw ConfigError("prune_eps", "must lie in [0, 1)");
  for (std::size_t j = 0; j < data.size(); ++j) {
    if (!std::isfinite(data[j].t)) throw NonMonotoneTimesError("observation time is not finite");
    if (j > 0 && !(data[j].t > data[j - 1].t)) {
      throw NonMonotoneTimesError("observation times must be strictly increasing (record " + std::to_string(j) + ")");
    }
  }
  FilterResult<State> result;
  State state = prior;
  MultiplicityVector fullinfo;
  for (std::size_t j = 0; j < data.size(); ++j) {
    FilterStepRecord<State> rec;
    rec.t = data[j].t;
    if (j > 0) {
      state = predict(state, data[j].t - data[j - 1].t);
      rec.components_before_prune = state.components.size();
      state = prune(state, prune_eps);
    } else {
      rec.components_before_prune = state.components.size();
    }
    rec.components_after_prune = state.components.size();
    auto updated = update(state, std::span<const double>(data[j].obs));
    state = std::move(updated.state);
    rec.log_ml_increment = updated.log_ml_increment;
    rec.pruned_mass = state.pruned_mass;
    // The full-information component is fixed by the latest non-empty batch
    // and followed through the silent stretches after it.
    if ((j == 0 || !data[j].obs.empty()) && !state.components.empty()) fullinfo = state.components.rbegin()->first;
    rec.weight_fullinfo = weight_of(state.components, fullinfo);
    rec.weight_prior = weight_prior(state.components);
    rec.state = std::make_shared<const State>(state);
    result.total_log_ml += rec.log_ml_increment;
    result.steps.push_back(std::move(rec));
  }
  return result;
}

}  // namespace detail

/// Alternates update and prediction over time-ordered batches, pruning after
/// every prediction.
inline FilterResult<FvFilterState> fv_filter(const FvFilterState& prior, std::span<const Batch> data,
                                             double prune_eps = 1e-8, const ExecutionOptions& exec = {}) {
  return detail::run_filter(
      prior, data, prune_eps, [&](const FvFilterState& s, std::span<const double> obs) { return fv_update(s, obs, exec); },
      [&](const FvFilterState& s, double dt) { return fv_predict(s, dt, exec); });
}

}  // namespace measure_filter
