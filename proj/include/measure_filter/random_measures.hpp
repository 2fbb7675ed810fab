#pragma once

// Filter states: finite mixtures of Dirichlet processes (FV) and of gamma
// random measures (DW) indexed by multiplicity vectors over a registry of
// observed atoms.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "measure_filter/base_measure.hpp"
#include "measure_filter/errors.hpp"
#include "measure_filter/multiplicity.hpp"
#include "measure_filter/numeric.hpp"
#include "measure_filter/parametric.hpp"

namespace measure_filter {

/// Append-only list of distinct observed values, matched by exact equality.
class AtomRegistry {
 public:
  std::optional<AtomIndex> find(double y) const {
    auto it = index_.find(y);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Index of y, registering it if unseen.
  AtomIndex intern(double y) {
    if (std::isnan(y)) throw PreconditionError("observations must not be NaN");
    if (auto found = find(y)) return *found;
    const auto idx = static_cast<AtomIndex>(atoms_.size());
    atoms_.push_back(y);
    index_.emplace(y, idx);
    return idx;
  }

  double value(AtomIndex idx) const { return atoms_.at(idx); }
  std::size_t size() const noexcept { return atoms_.size(); }
  const std::vector<double>& atoms() const noexcept { return atoms_; }

  static AtomRegistry from_values(std::span<const double> values) {
    AtomRegistry r;
    for (double y : values) {
      if (r.find(y)) throw PreconditionError("atom registry values must be distinct");
      r.intern(y);
    }
    return r;
  }

  friend bool operator==(const AtomRegistry& a, const AtomRegistry& b) { return a.atoms_ == b.atoms_; }

 private:
  std::vector<double> atoms_;
  std::map<double, AtomIndex> index_;
};

using ComponentMap = std::map<MultiplicityVector, double>;

struct FvFilterState {
  BaseMeasure base;
  AtomRegistry registry;
  ComponentMap components;
  double sigma_speed = 1.0;
  /// Cumulative weight discarded by pruning.
  double pruned_mass = 0.0;

  double theta() const { return base.theta; }
};

struct DwFilterState : FvFilterState {
  double beta = 1.0;
  double s = 0.0;
};

inline FvFilterState new_fv_prior(const BaseMeasure& base, double sigma_speed = 1.0) {
  base.validate();
  if (!(sigma_speed > 0.0) || !std::isfinite(sigma_speed)) throw ConfigError("sigma_speed", "must be > 0");
  FvFilterState state;
  state.base = base;
  state.sigma_speed = sigma_speed;
  state.components.emplace(MultiplicityVector{}, 1.0);
  return state;
}

inline DwFilterState new_dw_prior(const BaseMeasure& base, double beta, double sigma_speed = 1.0) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta", "beta must be a finite number > 0");
  DwFilterState state;
  static_cast<FvFilterState&>(state) = new_fv_prior(base, sigma_speed);
  state.beta = beta;
  state.s = 0.0;
  return state;
}

/// Throws PreconditionError when a state invariant is violated.
inline void check_invariants(const FvFilterState& state, double tolerance = 1e-12) {
  state.base.validate();
  if (state.components.empty()) throw PreconditionError("state has no components");
  CompensatedSum<> total;
  for (const auto& [m, w] : state.components) {
    if (!(w > 0.0) || !std::isfinite(w)) throw PreconditionError("component weight " + m.to_string() + " is not positive");
    if (m.dimension() > state.registry.size()) {
      throw PreconditionError("component " + m.to_string() + " references an unregistered atom");
    }
    total.add(w);
  }
  if (std::abs(total.value() - 1.0) > tolerance) {
    throw PreconditionError("weights sum to " + std::to_string(total.value()) + ", not 1");
  }
}

inline void check_invariants(const DwFilterState& state, double tolerance = 1e-12) {
  check_invariants(static_cast<const FvFilterState&>(state), tolerance);
  if (!(state.beta > 0.0)) throw PreconditionError("beta must be > 0");
  if (!(state.s >= 0.0)) throw PreconditionError("s must be >= 0");
}

/// Predictive density of one new observation, with respect to counting
/// measure on registered atoms plus Lebesgue measure elsewhere.
inline double predictive_density(const FvFilterState& state, double y) {
  const auto atom = state.registry.find(y);
  const double theta = state.theta();
  const double fresh = theta * state.base.density(y);
  double out = 0.0;
  for (const auto& [m, w] : state.components) {
    const double denom = theta + static_cast<double>(m.total());
    out += w * (atom ? static_cast<double>(m[*atom]) : fresh) / denom;
  }
  return out;
}

/// Atom-level partition together with the P0 mass of each cell.
struct CellPartition {
  Partition partition;
  std::vector<double> p0_mass;

  void validate(std::size_t atoms) const {
    partition.validate();
    if (partition.cell_of.size() < atoms) throw PreconditionError("partition does not map every registered atom");
    if (p0_mass.size() != partition.cells) throw PreconditionError("one P0 mass per cell is required");
    double total = 0.0;
    for (double p : p0_mass) {
      if (!(p >= 0.0)) throw PreconditionError("cell masses must be nonnegative");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-12) throw PreconditionError("cell masses must sum to 1");
  }
};

/// Cells (-inf, c_0], (c_0, c_1], ..., (c_{K-2}, inf) for increasing cut points.
inline CellPartition partition_by_cuts(const FvFilterState& state, std::span<const double> cuts) {
  for (std::size_t j = 1; j < cuts.size(); ++j) {
    if (!(cuts[j] > cuts[j - 1])) throw PreconditionError("cut points must be strictly increasing");
  }
  CellPartition out;
  out.partition.cells = static_cast<std::uint32_t>(cuts.size() + 1);
  for (double y : state.registry.atoms()) {
    const auto cell = std::lower_bound(cuts.begin(), cuts.end(), y) - cuts.begin();
    out.partition.cell_of.push_back(static_cast<std::uint32_t>(cell));
  }
  double previous = 0.0;
  for (double c : cuts) {
    const double cum = state.base.cdf(c);
    out.p0_mass.push_back(cum - previous);
    previous = cum;
  }
  out.p0_mass.push_back(1.0 - previous);
  return out;
}

/// Posterior mean measure of each cell. For FV these are probabilities; for
/// DW they are expected masses.
inline std::vector<double> mean_measure(const FvFilterState& state, const CellPartition& cells) {
  cells.validate(state.registry.size());
  const double theta = state.theta();
  std::vector<double> out(cells.partition.cells, 0.0);
  for (const auto& [m, w] : state.components) {
    const MultiplicityVector pm = project(m, cells.partition);
    const double denom = theta + static_cast<double>(m.total());
    for (std::size_t j = 0; j < out.size(); ++j) {
      out[j] += w * (theta * cells.p0_mass[j] + pm[static_cast<AtomIndex>(j)]) / denom;
    }
  }
  return out;
}

inline std::vector<double> mean_measure(const DwFilterState& state, const CellPartition& cells) {
  cells.validate(state.registry.size());
  const double theta = state.theta();
  const double rate = state.beta + state.s;
  std::vector<double> out(cells.partition.cells, 0.0);
  for (const auto& [m, w] : state.components) {
    const MultiplicityVector pm = project(m, cells.partition);
    for (std::size_t j = 0; j < out.size(); ++j) {
      out[j] += w * (theta * cells.p0_mass[j] + pm[static_cast<AtomIndex>(j)]) / rate;
    }
  }
  return out;
}

/// Posterior mean of the point mass at a registered atom.
inline double mean_atom_mass(const FvFilterState& state, AtomIndex atom) {
  if (atom >= state.registry.size()) throw PreconditionError("unknown atom index");
  double out = 0.0;
  for (const auto& [m, w] : state.components) out += w * m[atom] / (state.theta() + static_cast<double>(m.total()));
  return out;
}

inline double mean_atom_mass(const DwFilterState& state, AtomIndex atom) {
  if (atom >= state.registry.size()) throw PreconditionError("unknown atom index");
  double out = 0.0;
  for (const auto& [m, w] : state.components) out += w * m[atom] / (state.beta + state.s);
  return out;
}

inline double mean_total_mass(const DwFilterState& state) {
  double out = 0.0;
  for (const auto& [m, w] : state.components) out += w * (state.theta() + static_cast<double>(m.total()));
  return out / (state.beta + state.s);
}

namespace detail {

inline std::vector<double> cell_alpha(double theta, const CellPartition& cells) {
  std::vector<double> alpha(cells.p0_mass.size());
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    if (!(cells.p0_mass[j] > 0.0)) throw PreconditionError("projection requires positive cell masses");
    alpha[j] = theta * cells.p0_mass[j];
  }
  return alpha;
}

inline DenseComponents project_components(const ComponentMap& components, const CellPartition& cells) {
  DenseComponents out;
  for (const auto& [m, w] : components) {
    out[project(m, cells.partition).to_dense(cells.partition.cells)] += w;
  }
  return out;
}

}  // namespace detail

/// Law of the cell probabilities: a finite mixture of Dirichlet distributions.
inline DirichletMixture project_state(const FvFilterState& state, const CellPartition& cells) {
  cells.validate(state.registry.size());
  return DirichletMixture{detail::cell_alpha(state.theta(), cells), detail::project_components(state.components, cells)};
}

/// Law of the cell masses: a finite mixture of independent gamma products.
inline GammaMixture project_state(const DwFilterState& state, const CellPartition& cells) {
  cells.validate(state.registry.size());
  return GammaMixture{detail::cell_alpha(state.theta(), cells), state.beta, state.s,
                      detail::project_components(state.components, cells)};
}

namespace detail {

/// Drops components below eps (never the heaviest) and renormalises.
inline double prune_components(ComponentMap& components, double eps) {
  if (!(eps >= 0.0 && eps < 1.0)) throw PreconditionError("prune eps must lie in [0, 1)");
  if (eps == 0.0 || components.size() <= 1) return 0.0;
  auto heaviest = std::max_element(components.begin(), components.end(),
                                   [](const auto& a, const auto& b) { return a.second < b.second; });
  const MultiplicityVector keep = heaviest->first;
  CompensatedSum<> dropped;
  CompensatedSum<> kept;
  for (auto it = components.begin(); it != components.end();) {
    if (it->second < eps && !(it->first == keep)) {
      dropped.add(it->second);
      it = components.erase(it);
    } else {
      kept.add(it->second);
      ++it;
    }
  }
  const double z = kept.value();
  for (auto& [m, w] : components) w /= z;
  return dropped.value();
}

}  // namespace detail

template <typename State>
State prune(const State& state, double eps) {
  State out = state;
  out.pruned_mass += detail::prune_components(out.components, eps);
  return out;
}

/// Weight of the origin (the stationary prior component); 0 when absent.
inline double weight_prior(const ComponentMap& components) {
  auto it = components.find(MultiplicityVector{});
  return it == components.end() ? 0.0 : it->second;
}

/// Weight of the component with the largest total (ties broken by the
/// lattice ordering), the one carrying every retained observation.
inline double weight_fullinfo(const ComponentMap& components) {
  return components.empty() ? 0.0 : components.rbegin()->second;
}

/// Weight of a given component; 0 once it has been pruned away.
inline double weight_of(const ComponentMap& components, const MultiplicityVector& m) {
  auto it = components.find(m);
  return it == components.end() ? 0.0 : it->second;
}

}  // namespace measure_filter
