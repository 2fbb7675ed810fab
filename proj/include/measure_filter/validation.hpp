#pragma once

// Validation suites. Each check compares the library against an independent
// reference (see oracles.hpp) or a Monte Carlo estimate and reports pass/fail
// against a fixed tolerance.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "measure_filter/dual.hpp"
#include "measure_filter/dw_filter.hpp"
#include "measure_filter/fv_filter.hpp"
#include "measure_filter/io.hpp"
#include "measure_filter/multiplicity.hpp"
#include "measure_filter/oracles.hpp"
#include "measure_filter/parametric.hpp"
#include "measure_filter/random_measures.hpp"
#include "measure_filter/simulation.hpp"

namespace measure_filter {

struct CheckResult {
  int criterion = 0;
  std::string name;
  bool passed = false;
  double seconds = 0.0;
  std::string detail;
  OrderedJson metrics = OrderedJson::object();
};

struct SuiteOptions {
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

namespace validation {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

/// `total` units spread uniformly at random over k coordinates.
template <typename Rng>
CountVector random_counts(std::size_t k, std::uint32_t total, Rng& rng) {
  CountVector m(k, 0);
  std::uniform_int_distribution<std::size_t> pick(0, k - 1);
  for (std::uint32_t u = 0; u < total; ++u) ++m[pick(rng)];
  return m;
}

template <typename Rng>
double uniform(double lo, double hi, Rng& rng) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

template <typename Rng>
double log_uniform(double lo, double hi, Rng& rng) {
  return std::exp(uniform(std::log(lo), std::log(hi), rng));
}

/// Random partition of `atoms` atoms into 1..max_cells cells with positive P0 masses.
template <typename Rng>
CellPartition random_cells(std::size_t atoms, std::uint32_t max_cells, Rng& rng) {
  CellPartition cells;
  cells.partition.cells = std::uniform_int_distribution<std::uint32_t>(1, max_cells)(rng);
  std::uniform_int_distribution<std::uint32_t> cell(0, cells.partition.cells - 1);
  for (std::size_t a = 0; a < atoms; ++a) cells.partition.cell_of.push_back(cell(rng));
  double total = 0.0;
  for (std::uint32_t c = 0; c < cells.partition.cells; ++c) {
    cells.p0_mass.push_back(uniform(0.1, 1.0, rng));
    total += cells.p0_mass.back();
  }
  for (double& p : cells.p0_mass) p /= total;
  double rest = 1.0;
  for (std::size_t c = 0; c + 1 < cells.p0_mass.size(); ++c) rest -= cells.p0_mass[c];
  cells.p0_mass.back() = rest;
  return cells;
}

template <typename Rng>
ComponentMap random_components(std::size_t atoms, std::uint32_t max_total, Rng& rng) {
  ComponentMap comps;
  const int count = std::uniform_int_distribution<int>(1, 3)(rng);
  for (int c = 0; c < count; ++c) {
    const auto total = std::uniform_int_distribution<std::uint32_t>(0, max_total)(rng);
    comps[to_sparse(random_counts(atoms, total, rng))] += uniform(0.05, 1.0, rng);
  }
  double z = 0.0;
  for (const auto& [m, w] : comps) z += w;
  for (auto& [m, w] : comps) w /= z;
  return comps;
}

inline double max_abs_difference(const DenseComponents& a, const DenseComponents& b) {
  double worst = 0.0;
  for (const auto& [m, w] : a) {
    auto it = b.find(m);
    worst = std::max(worst, std::abs(w - (it == b.end() ? 0.0 : it->second)));
  }
  for (const auto& [m, w] : b) {
    if (!a.count(m)) worst = std::max(worst, std::abs(w));
  }
  return worst;
}

inline std::vector<double> registry_values(std::size_t atoms) {
  std::vector<double> values;
  for (std::size_t a = 0; a < atoms; ++a) values.push_back(0.1 + 0.2 * static_cast<double>(a));
  return values;
}

// Criterion 1: death-process transition probabilities.
inline CheckResult check_death_process(const SuiteOptions& opt) {
  const auto start = Clock::now();
  CheckResult r{1, "death-process kernels vs matrix exponential", false, 0.0, {}, OrderedJson::object()};
  std::mt19937_64 rng(opt.seed * 1000 + 1);
  const double thetas[] = {0.5, 1.0, 3.0};
  const double times[] = {0.01, 0.1, 1.0, 10.0};
  double worst_oracle = 0.0, worst_row = 0.0, worst_ck = 0.0;
  std::size_t rows = 0;
  for (double theta : thetas) {
    const FvDualParams params{theta, 1.0};
    for (std::uint32_t total = 1; total <= 12; ++total) {
      const std::size_t k = 1 + (total + static_cast<std::uint32_t>(theta * 2)) % 4;
      const CountVector dense = random_counts(k, total, rng);
      const MultiplicityVector m = to_sparse(dense);
      for (double t : times) {
        const auto oracle_row = oracle::death_process_row(dense, theta, t);
        CompensatedSum<> row_sum;
        for (const auto& [n_dense, p_oracle] : oracle_row) {
          const double p = fv_death_prob(m, to_sparse(n_dense), t, params);
          worst_oracle = std::max(worst_oracle, std::abs(p - p_oracle));
          row_sum.add(p);
        }
        worst_row = std::max(worst_row, std::abs(row_sum.value() - 1.0));
        ++rows;
      }
      // Chapman-Kolmogorov over consecutive time pairs.
      for (std::size_t a = 0; a + 1 < std::size(times); ++a) {
        const double s = times[a], u = times[a + 1];
        std::map<MultiplicityVector, double> composed;
        for_each_below(m, [&](const MultiplicityVector& mid) {
          const double p1 = fv_death_prob(m, mid, s, params);
          for_each_below(mid, [&](const MultiplicityVector& n) { composed[n] += p1 * fv_death_prob(mid, n, u, params); });
        });
        for (const auto& [n, v] : composed) {
          worst_ck = std::max(worst_ck, std::abs(v - fv_death_prob(m, n, s + u, params)));
        }
      }
    }
  }
  r.seconds = seconds_since(start);
  r.passed = worst_oracle <= 1e-8 && worst_row <= 1e-10 && worst_ck <= 1e-8 && r.seconds < 10.0;
  r.metrics["rows"] = rows;
  r.metrics["max_abs_vs_expm"] = worst_oracle;
  r.metrics["max_row_sum_error"] = worst_row;
  r.metrics["max_chapman_kolmogorov_error"] = worst_ck;
  r.detail = "expm " + sci(worst_oracle) + " (tol 1e-8), row sums " + sci(worst_row) + " (tol 1e-10), CK " +
             sci(worst_ck) + " (tol 1e-8), " + sci(r.seconds) + " s (limit 10 s)";
  return r;
}

// Criterion 2: projections of hypergeometric draws are hypergeometric.
inline CheckResult check_hypergeometric_merging(const SuiteOptions& opt) {
  const auto start = Clock::now();
  CheckResult r{2, "hypergeometric merging consistency", false, 0.0, {}, OrderedJson::object()};
  std::mt19937_64 rng(opt.seed * 1000 + 2);
  double worst = 0.0;
  std::size_t vectors = 0;
  for (const auto& dense : oracle::lattice_below({10, 10, 10, 10})) {
    std::uint32_t total = 0;
    for (auto c : dense) total += c;
    if (total > 10) continue;
    ++vectors;
    const MultiplicityVector m = to_sparse(dense);
    const CellPartition cells = random_cells(4, 4, rng);
    const MultiplicityVector pm = project(m, cells.partition);
    const CountVector pm_dense = pm.to_dense(cells.partition.cells);
    std::map<CountVector, double> merged;
    for_each_below(m, [&](const MultiplicityVector& i) {
      const double p = hypergeom_pmf(i, m);
      worst = std::max(worst, std::abs(p - oracle::hypergeometric_by_counting(i.to_dense(4), dense)));
      merged[project(i, cells.partition).to_dense(cells.partition.cells)] += p;
    });
    for (const auto& [j, v] : merged) worst = std::max(worst, std::abs(v - oracle::hypergeometric_by_counting(j, pm_dense)));
  }
  r.seconds = seconds_since(start);
  r.passed = worst <= 1e-12;
  r.metrics["vectors"] = vectors;
  r.metrics["max_abs_error"] = worst;
  r.detail = std::to_string(vectors) + " vectors, max error " + sci(worst) + " (tol 1e-12)";
  return r;
}

// Criterion 3: FV propagation commutes with projection onto WF.
inline CheckResult check_fv_wf_commutation(const SuiteOptions& opt) {
  const auto start = Clock::now();
  CheckResult r{3, "FV/WF projection-propagation commutation", false, 0.0, {}, OrderedJson::object()};
  std::mt19937_64 rng(opt.seed * 1000 + 3);
  double worst = 0.0;
  for (int c = 0; c < 100; ++c) {
    const std::size_t atoms = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
    FvFilterState state = new_fv_prior(BaseMeasure{uniform(0.3, 4.0, rng), UniformP0{0.0, 1.0}});
    state.registry = AtomRegistry::from_values(registry_values(atoms));
    state.components = random_components(atoms, 10, rng);
    const double t = log_uniform(0.005, 5.0, rng);
    const CellPartition cells = random_cells(atoms, 4, rng);
    const auto lhs = project_state(fv_predict(state, t, {opt.threads}), cells);
    const auto rhs = wf_predict(project_state(state, cells), t);
    worst = std::max(worst, max_abs_difference(lhs.components, rhs.components));
  }
  r.seconds = seconds_since(start);
  r.passed = worst <= 1e-10;
  r.metrics["cases"] = 100;
  r.metrics["max_abs_weight_difference"] = worst;
  r.detail = "100 random states, max weight difference " + sci(worst) + " (tol 1e-10)";
  return r;
}

// Criterion 4: DW propagation against products of one-dimensional thinnings.
inline CheckResult check_dw_product_cir(const SuiteOptions& opt) {
  const auto start = Clock::now();
  CheckResult r{4, "DW propagation vs product-of-CIR oracle", false, 0.0, {}, OrderedJson::object()};
  std::mt19937_64 rng(opt.seed * 1000 + 4);
  double worst = 0.0, worst_s = 0.0, worst_far = 0.0, far_s = 0.0;
  bool identity = true;
  for (int c = 0; c < 100; ++c) {
    const std::size_t atoms = std::uniform_int_distribution<std::size_t>(1, 4)(rng);
    const double beta = log_uniform(0.2, 5.0, rng);
    DwFilterState state = new_dw_prior(BaseMeasure{uniform(0.3, 4.0, rng), UniformP0{0.0, 1.0}}, beta);
    state.registry = AtomRegistry::from_values(registry_values(atoms));
    state.components = random_components(atoms, 8, rng);
    state.s = uniform(0.1, 10.0, rng);
    const double t = log_uniform(0.01, 10.0, rng) / beta;
    const CellPartition cells{Partition::identity(atoms), std::vector<double>(atoms, 1.0 / atoms)};
    CellPartition exact_cells = cells;
    double rest = 1.0;
    for (std::size_t a = 0; a + 1 < atoms; ++a) rest -= exact_cells.p0_mass[a];
    exact_cells.p0_mass.back() = rest;

    const auto predicted = project_state(dw_predict(state, t, BinomialConvention::survivor, {opt.threads}), exact_cells);
    const double p = oracle::cir_survival(state.s, beta, t);
    DenseComponents expected;
    for (const auto& [m, w] : state.components) {
      for (const auto& [n, q] : oracle::product_thinning(m.to_dense(atoms), p)) {
        if (q > 0.0) expected[n] += w * q;
      }
    }
    worst = std::max(worst, max_abs_difference(predicted.components, expected));
    worst_s = std::max(worst_s, std::abs(predicted.s - p * state.s));

    const DwFilterState same = dw_predict(state, 0.0);
    identity = identity && same.components == state.components && same.s == state.s;

    const DwFilterState far = dw_predict(state, 100.0 / beta);
    for (const auto& [m, w] : far.components) {
      if (!m.is_zero()) worst_far = std::max(worst_far, w);
    }
    far_s = std::max(far_s, far.s);
  }
  r.seconds = seconds_since(start);
  r.passed = worst <= 1e-10 && worst_s <= 1e-10 && identity && worst_far < 1e-6 && far_s < 1e-6;
  r.metrics["max_abs_weight_difference"] = worst;
  r.metrics["max_abs_s_difference"] = worst_s;
  r.metrics["identity_at_zero"] = identity;
  r.metrics["max_non_origin_weight_at_100_over_beta"] = worst_far;
  r.metrics["max_s_at_100_over_beta"] = far_s;
  r.detail = "weights " + sci(worst) + " (tol 1e-10), identity at t=0 " + (identity ? "exact" : "NOT exact") +
             ", at t=100/beta max non-origin weight " + sci(worst_far) + " and S_t " + sci(far_s) + " (tol 1e-6)";
  return r;
}

// Criterion 5: deterministic dual against numerical integration.
inline CheckResult check_dual_ode(const SuiteOptions& opt) {
  const auto start = Clock::now();
  CheckResult r{5, "S_t closed form vs RK4 and semigroup property", false, 0.0, {}, OrderedJson::object()};
  std::mt19937_64 rng(opt.seed * 1000 + 5);
  double worst = 0.0, worst_semigroup = 0.0;
  for (int c = 0; c < 50; ++c) {
    const double beta = log_uniform(0.1, 5.0, rng);
    const double s0 = uniform(0.0, 20.0, rng);
    const DwDualParams params{1.0, beta, 1.0};
    for (int k = 1; k <= 20; ++k) {
      const double t = 0.5 * k;
      const double reference = oracle::rk4_dual(s0, beta, t, static_cast<std::size_t>(20000 * k));
      worst = std::max(worst, std::abs(dw_s_decay(s0, t, params).state.s - reference));
    }
    const double t1 = uniform(0.0, 5.0, rng), t2 = uniform(0.0, 5.0, rng);
    const double direct = dw_s_decay(s0, t1 + t2, params).state.s;
    const double composed = dw_s_decay(dw_s_decay(s0, t1, params).state.s, t2, params).state.s;
    worst_semigroup = std::max(worst_semigroup, std::abs(direct - composed));
  }
  r.seconds = seconds_since(start);
  r.passed = worst <= 1e-8 && worst_semigroup <= 1e-10;
  r.metrics["max_abs_vs_rk4"] = worst;
  r.metrics["max_semigroup_error"] = worst_semigroup;
  r.detail = "RK4 " + sci(worst) + " (tol 1e-8), semigroup " + sci(worst_semigroup) + " (tol 1e-10)";
  return r;
}

// Criterion 6: CIR filter against a grid filter.
inline CheckResult check_cir_grid(const SuiteOptions& opt) {
  const auto start = Clock::now();
  CheckResult r{6, "CIR filter vs 2000-point grid oracle", false, 0.0, {}, OrderedJson::object()};
  SimConfig cfg;
  cfg.model = ModelKind::cir;
  cfg.alpha = {2.0};
  cfg.beta = 1.0;
  cfg.seed = opt.seed;
  for (int j = 0; j < 10; ++j) cfg.schedule.push_back({static_cast<double>(j), 3});
  const Dataset data = sim_cir_hmm(cfg);
  std::vector<PoissonBatch> batches;
  for (const auto& b : data.batches) {
    PoissonBatch pb{b.t, {}};
    for (double y : b.obs) pb.values.push_back(static_cast<Count>(y));
    batches.push_back(pb);
  }
  const auto run = cir_filter(GammaMixture::prior(cfg.alpha, cfg.beta), batches, 1.0, 0.0);
  double z_max = cfg.alpha[0] / cfg.beta + 25.0 * std::sqrt(cfg.alpha[0]) / cfg.beta;
  for (const auto& post : run.posteriors) {
    const auto mv = gamma_mean_variance(post);
    z_max = std::max(z_max, mv.mean + 25.0 * std::sqrt(mv.variance));
  }
  const auto grid = grid_oracle_cir(batches, cfg.alpha[0], cfg.beta, GridSpec{2000, z_max});
  double worst_mean = 0.0, worst_var = 0.0;
  for (std::size_t j = 0; j < batches.size(); ++j) {
    const auto mv = gamma_mean_variance(run.posteriors[j]);
    worst_mean = std::max(worst_mean, std::abs(mv.mean - grid.steps[j].mean) / std::abs(grid.steps[j].mean));
    worst_var = std::max(worst_var, std::abs(mv.variance - grid.steps[j].variance) / std::abs(grid.steps[j].variance));
  }
  r.seconds = seconds_since(start);
  r.passed = worst_mean <= 1e-3 && worst_var <= 1e-3 && r.seconds < 30.0 && !grid.coverage_warning;
  r.metrics["max_rel_error_mean"] = worst_mean;
  r.metrics["max_rel_error_variance"] = worst_var;
  r.metrics["grid_upper_limit"] = z_max;
  r.metrics["coverage_warning"] = grid.coverage_warning;
  r.detail = "mean " + sci(worst_mean) + ", variance " + sci(worst_var) + " (tol 1e-3), " + sci(r.seconds) +
             " s (limit 30 s)" + (grid.coverage_warning ? ", grid coverage warning" : "");
  return r;
}

// Criterion 7: WF filter against a particle filter.
inline CheckResult check_wf_particle(const SuiteOptions& opt) {
  const auto start = Clock::now();
  CheckResult r{7, "WF filter vs particle oracle", false, 0.0, {}, OrderedJson::object()};
  SimConfig cfg;
  cfg.model = ModelKind::wf;
  cfg.alpha = {0.8, 1.2, 1.5};
  cfg.seed = opt.seed;
  for (int j = 0; j < 10; ++j) cfg.schedule.push_back({static_cast<double>(j), 15});
  const Dataset data = sim_wf_hmm(cfg);
  std::vector<CategoryBatch> batches;
  for (const auto& b : data.batches) {
    CategoryBatch cb{b.t, CountVector(3, 0)};
    for (double y : b.obs) ++cb.counts[static_cast<std::size_t>(y)];
    batches.push_back(cb);
  }
  const auto run = wf_filter(DirichletMixture::prior(cfg.alpha), batches, 1.0, 0.0);
  const auto particles = particle_oracle_wf(batches, cfg.alpha, 200000, opt.seed + 7, 40, 1.0, opt.threads);
  double worst_z = 0.0;
  for (std::size_t j = 0; j < batches.size(); ++j) {
    const auto mean = wf_mean(run.posteriors[j]);
    for (std::size_t c = 0; c < 3; ++c) {
      worst_z = std::max(worst_z, std::abs(mean[c] - particles.steps[j].mean[c]) / particles.steps[j].standard_error[c]);
    }
  }
  r.seconds = seconds_since(start);
  r.passed = worst_z <= 3.0 && r.seconds < 300.0;
  r.metrics["max_abs_z"] = worst_z;
  r.metrics["degenerate"] = particles.degenerate;
  r.detail = "max |mean difference| / SE " + sci(worst_z) + " (tol 3), " + sci(r.seconds) + " s (limit 300 s)";
  return r;
}

// Criterion 8: duality identity by Monte Carlo.
inline DualityReport duality_case(int k, std::uint64_t seed, std::uint64_t mc_seed) {
  std::mt19937_64 rng(seed * 1000 + 8 + 7919 * static_cast<std::uint64_t>(k));
  if (k % 2 == 0) {
    const std::size_t dim = std::uniform_int_distribution<std::size_t>(2, 3)(rng);
    const double thetas[] = {0.5, 1.0, 3.0};
    const double theta = thetas[std::uniform_int_distribution<int>(0, 2)(rng)];
    std::vector<double> alpha(dim);
    double sum = 0.0;
    for (auto& a : alpha) sum += (a = uniform(0.5, 1.5, rng));
    for (auto& a : alpha) a *= theta / sum;
    KeyedStream x_rng(seed, 8, static_cast<std::uint64_t>(k));
    const auto x0 = draw_dirichlet(std::span<const double>(std::vector<double>(dim, 1.0)), x_rng);
    const CountVector m = random_counts(dim, std::uniform_int_distribution<std::uint32_t>(1, 5)(rng), rng);
    const double t = uniform(0.1, 1.5, rng);
    return mc_duality_check(x0, m, t, alpha, 100000, mc_seed);
  }
  const std::size_t dim = std::uniform_int_distribution<std::size_t>(1, 2)(rng);
  std::vector<double> alpha(dim), z0(dim);
  for (auto& a : alpha) a = uniform(0.5, 3.0, rng);
  const double beta = uniform(0.5, 2.0, rng);
  for (std::size_t i = 0; i < dim; ++i) z0[i] = uniform(0.2, 2.0 * alpha[i] / beta, rng);
  const double s = uniform(0.2, 3.0, rng);
  const CountVector m = random_counts(dim, std::uniform_int_distribution<std::uint32_t>(1, 4)(rng), rng);
  const double t = uniform(0.1, 2.0, rng);
  return mc_duality_check_cir(z0, m, s, t, alpha, beta, 100000, mc_seed);
}

inline CheckResult check_duality(const SuiteOptions& opt) {
  const auto start = Clock::now();
  CheckResult r{8, "duality identity by Monte Carlo", false, 0.0, {}, OrderedJson::object()};
  std::vector<DualityReport> reports(20);
  parallel_chunks(20, resolve_threads(opt.threads), [&](std::size_t k) {
    reports[k] = duality_case(static_cast<int>(k), opt.seed, opt.seed * 7 + k);
  });
  std::vector<int> borderline;
  OrderedJson cases = OrderedJson::array();
  for (int k = 0; k < 20; ++k) {
    OrderedJson c;
    c["kind"] = k % 2 == 0 ? "wf" : "cir";
    c["simulated"] = reports[k].simulated;
    c["exact"] = reports[k].exact;
    c["standard_error"] = reports[k].standard_error;
    c["z"] = reports[k].z;
    cases.push_back(c);
    if (!(std::abs(reports[k].z) <= 3.0)) borderline.push_back(k);
  }
  bool rerun_ok = true;
  if (borderline.size() == 1) {
    const int k = borderline.front();
    const auto again = duality_case(k, opt.seed, opt.seed * 7 + k + 1'000'003);
    rerun_ok = std::abs(again.z) <= 3.0;
    r.metrics["rerun_case"] = k;
    r.metrics["rerun_z"] = again.z;
  }
  double worst = 0.0;
  for (const auto& rep : reports) worst = std::max(worst, std::abs(rep.z));
  r.seconds = seconds_since(start);
  r.passed = borderline.empty() || (borderline.size() == 1 && rerun_ok);
  r.metrics["cases"] = cases;
  r.metrics["max_abs_z"] = worst;
  r.metrics["over_3"] = borderline.size();
  r.detail = "20 configurations, max |z| " + sci(worst) + ", " + std::to_string(borderline.size()) + " over 3" +
             (borderline.size() == 1 ? (rerun_ok ? " (fresh-seed rerun passed)" : " (fresh-seed rerun failed)") : "");
  return r;
}

// Criterion 9: weight trajectories and the sawtooth path of s.
inline CheckResult check_cir_figures(const SuiteOptions& opt) {
  const auto start = Clock::now();
  CheckResult r{9, "CIR weight trajectories and sawtooth s path", false, 0.0, {}, OrderedJson::object()};
  const double alpha = 2.0, beta = 1.5;
  std::vector<PoissonBatch> single{{0.0, {2, 1, 3, 0, 2}}};
  for (int k = 1; k <= 200; ++k) single.push_back({k * (50.0 / beta) / 200.0, {}});
  const auto run = cir_filter(GammaMixture::prior({alpha}, beta), single, 1.0, 0.0);
  bool monotone = std::abs(run.records.front().weight_fullinfo - 1.0) <= 1e-15;
  for (std::size_t j = 1; j < run.records.size(); ++j) {
    monotone = monotone && run.records[j].weight_fullinfo < run.records[j - 1].weight_fullinfo;
  }
  const double final_full = run.records.back().weight_fullinfo;
  const double final_prior = run.records.back().weight_prior;

  // Batches of one count at 100, 200, 300 with propagation points every 5.
  std::vector<PoissonBatch> multi;
  std::uint64_t seed_counts = opt.seed;
  for (int t = 100; t <= 400; t += 5) {
    PoissonBatch b{static_cast<double>(t), {}};
    if (t == 100 || t == 200 || t == 300) b.values.push_back(static_cast<Count>(1 + seed_counts++ % 3));
    multi.push_back(b);
  }
  const auto mrun = cir_filter(GammaMixture::prior({alpha}, 0.05), multi, 1.0, 0.0);
  bool sawtooth = true;
  std::size_t jumps = 0;
  const DwDualParams params{alpha, 0.05, 1.0};
  for (std::size_t j = 1; j < multi.size(); ++j) {
    const double before = dw_s_decay(mrun.posteriors[j - 1].s, multi[j].t - multi[j - 1].t, params).state.s;
    const double after = mrun.posteriors[j].s;
    if (!multi[j].values.empty()) {
      sawtooth = sawtooth && std::abs(after - (before + 1.0)) <= 1e-12;
      ++jumps;
    } else {
      sawtooth = sawtooth && after < mrun.posteriors[j - 1].s && std::abs(after - before) <= 1e-12;
    }
  }
  sawtooth = sawtooth && std::abs(mrun.posteriors.front().s - 1.0) <= 1e-15 && jumps == 2;
  r.seconds = seconds_since(start);
  r.passed = monotone && final_full < 0.01 && final_prior > 0.99 && sawtooth;
  r.metrics["fullinfo_monotone"] = monotone;
  r.metrics["fullinfo_at_50_over_beta"] = final_full;
  r.metrics["prior_at_50_over_beta"] = final_prior;
  r.metrics["sawtooth"] = sawtooth;
  r.detail = std::string("full-info weight ") + (monotone ? "monotone" : "NOT monotone") + " from 1 to " +
             sci(final_full) + " (< 0.01), prior weight " + sci(final_prior) + " (> 0.99), s path " +
             (sawtooth ? "sawtooth" : "NOT sawtooth");
  return r;
}

// Criterion 10: cancellation at large totals and short times.
inline CheckResult check_stability(const SuiteOptions& opt) {
  const auto start = Clock::now();
  CheckResult r{10, "extended-precision stability at |m| = 40", false, 0.0, {}, OrderedJson::object()};
  double min_raw = 0.0;
  std::size_t extended = 0, coefficients = 0;
  double worst_sum = 0.0, min_weight = 1.0;
  bool positive = true;
  for (double theta : {0.5, 1.0, 3.0}) {
    for (double t : {1e-3, 1e-2}) {
      const FvDualParams params{theta, 1.0};
      for (std::uint64_t dead = 1; dead <= 40; ++dead) {
        const auto c = block_coeff_detailed(40, dead, t, params);
        min_raw = std::min(min_raw, c.raw);
        extended += c.extended ? 1 : 0;
        ++coefficients;
      }
      FvFilterState state = new_fv_prior(BaseMeasure{theta, UniformP0{0.0, 1.0}});
      state.registry = AtomRegistry::from_values(registry_values(4));
      state.components = {{MultiplicityVector{{0, 10}, {1, 10}, {2, 10}, {3, 10}}, 1.0}};
      const auto predicted = fv_predict(state, t, {opt.threads});
      CompensatedSum<> total;
      for (const auto& [n, w] : predicted.components) {
        positive = positive && w > 0.0 && std::isfinite(w);
        min_weight = std::min(min_weight, w);
        total.add(w);
      }
      worst_sum = std::max(worst_sum, std::abs(total.value() - 1.0));
    }
  }
  r.seconds = seconds_since(start);
  r.passed = min_raw > -1e-9 && positive && worst_sum <= 1e-12;
  r.metrics["min_raw_coefficient"] = min_raw;
  r.metrics["extended_evaluations"] = extended;
  r.metrics["coefficients"] = coefficients;
  r.metrics["max_weight_sum_error"] = worst_sum;
  r.metrics["min_weight"] = min_weight;
  r.detail = "min raw coefficient " + sci(min_raw) + " (> -1e-9), " + std::to_string(extended) + "/" +
             std::to_string(coefficients) + " in extended precision, simplex error " + sci(worst_sum) +
             (positive ? ", all weights positive" : ", NON-POSITIVE weights");
  return r;
}

// Criterion 11: bounded growth of the FV filter.
inline CheckResult check_fv_performance(const SuiteOptions& opt) {
  CheckResult r{11, "FV filter boundedness and runtime", false, 0.0, {}, OrderedJson::object()};
  SimConfig cfg;
  cfg.model = ModelKind::fv;
  cfg.base = BaseMeasure{1.0, UniformP0{0.0, 1.0}};
  cfg.seed = opt.seed;
  for (int j = 0; j < 10; ++j) cfg.schedule.push_back({static_cast<double>(j), 10});
  const Dataset data = sim_fv_hmm(cfg);
  const auto start = Clock::now();
  const auto run = fv_filter(new_fv_prior(cfg.base), data.batches, 1e-6, {opt.threads});
  r.seconds = seconds_since(start);
  std::size_t peak = 0;
  for (const auto& step : run.steps) peak = std::max({peak, step.components_before_prune, step.components_after_prune});
  const double pruned = run.steps.back().pruned_mass;
  r.passed = r.seconds < 10.0 && peak <= 100000 && pruned < 1e-3;
  r.metrics["seconds"] = r.seconds;
  r.metrics["peak_components"] = peak;
  r.metrics["cumulative_pruned_mass"] = pruned;
  r.detail = sci(r.seconds) + " s (limit 10 s), peak " + std::to_string(peak) + " components (limit 1e5), pruned mass " +
             sci(pruned) + " (< 1e-3)";
  return r;
}

}  // namespace validation

inline const std::map<std::string, std::vector<int>>& suite_criteria() {
  static const std::map<std::string, std::vector<int>> suites{
      {"projection", {2, 3, 4}},
      {"stability", {1, 5, 10, 11}},
      {"oracle", {6, 7, 9}},
      {"duality", {8}},
  };
  return suites;
}

inline CheckResult run_criterion(int criterion, const SuiteOptions& opt) {
  using namespace validation;
  switch (criterion) {
    case 1: return check_death_process(opt);
    case 2: return check_hypergeometric_merging(opt);
    case 3: return check_fv_wf_commutation(opt);
    case 4: return check_dw_product_cir(opt);
    case 5: return check_dual_ode(opt);
    case 6: return check_cir_grid(opt);
    case 7: return check_wf_particle(opt);
    case 8: return check_duality(opt);
    case 9: return check_cir_figures(opt);
    case 10: return check_stability(opt);
    case 11: return check_fv_performance(opt);
    default: throw PreconditionError("unknown criterion " + std::to_string(criterion));
  }
}

/// Runs one check, turning library exceptions into a failed result.
inline CheckResult run_criterion_guarded(int criterion, const SuiteOptions& opt) {
  try {
    return run_criterion(criterion, opt);
  } catch (const std::exception& e) {
    CheckResult r{criterion, "criterion " + std::to_string(criterion), false, 0.0, {}, OrderedJson::object()};
    r.detail = std::string("error: ") + e.what();
    return r;
  }
}

inline std::vector<CheckResult> run_suite(const std::string& suite, const SuiteOptions& opt) {
  const auto& suites = suite_criteria();
  auto it = suites.find(suite);
  if (it == suites.end()) throw ConfigError("suite", "expected one of duality, projection, oracle, stability");
  std::vector<CheckResult> out;
  for (int c : it->second) out.push_back(run_criterion_guarded(c, opt));
  return out;
}

inline OrderedJson report_to_json(const std::string& suite, const SuiteOptions& opt,
                                  const std::vector<CheckResult>& results) {
  OrderedJson j;
  j["suite"] = suite;
  j["seed"] = opt.seed;
  bool all = true;
  OrderedJson checks = OrderedJson::array();
  OrderedJson failures = OrderedJson::array();
  for (const auto& r : results) {
    all = all && r.passed;
    OrderedJson c;
    c["criterion"] = r.criterion;
    c["name"] = r.name;
    c["passed"] = r.passed;
    c["seconds"] = r.seconds;
    c["detail"] = r.detail;
    c["metrics"] = r.metrics;
    checks.push_back(c);
    if (!r.passed) failures.push_back(r.criterion);
  }
  j["passed"] = all;
  j["failures"] = failures;
  j["checks"] = checks;
  return j;
}

inline std::string format_check_line(const CheckResult& r) {
  return std::string(r.passed ? "PASS" : "FAIL") + "  criterion " + std::to_string(r.criterion) + ": " + r.name +
         " | " + r.detail;
}

}  // namespace measure_filter
