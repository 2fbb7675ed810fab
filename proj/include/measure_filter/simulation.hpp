#pragma once

// Exact synthetic data for the four signal classes, and Monte Carlo harnesses
// used as independent checks of the filters.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "measure_filter/base_measure.hpp"
#include "measure_filter/dual.hpp"
#include "measure_filter/errors.hpp"
#include "measure_filter/fv_filter.hpp"
#include "measure_filter/numeric.hpp"
#include "measure_filter/parallel.hpp"
#include "measure_filter/parametric.hpp"
#include "measure_filter/random.hpp"

namespace measure_filter {

enum class ModelKind { fv, dw, wf, cir };

inline const char* model_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::fv: return "fv";
    case ModelKind::dw: return "dw";
    case ModelKind::wf: return "wf";
    case ModelKind::cir: return "cir";
  }
  return "?";
}

struct ScheduleEntry {
  double t = 0.0;
  /// Batch size (fv, wf) or number of Poisson count observations (cir).
  /// Unused for dw, where the count is Poisson in the latent total mass.
  std::uint64_t n = 0;
};

struct SimConfig {
  ModelKind model = ModelKind::fv;
  BaseMeasure base{};               // fv, dw
  std::vector<double> alpha;        // wf, cir
  double beta = 1.0;                // dw, cir
  double sigma_speed = 1.0;
  std::vector<ScheduleEntry> schedule;
  std::uint64_t seed = 0;
  /// Largest lineage count the FV/DW simulators will materialise.
  std::uint64_t max_seeds = 10'000'000;

  double theta() const {
    if (model == ModelKind::fv || model == ModelKind::dw) return base.theta;
    return std::accumulate(alpha.begin(), alpha.end(), 0.0);
  }

  void validate() const {
    if (model == ModelKind::fv || model == ModelKind::dw) {
      base.validate();
    } else {
      if (alpha.empty()) throw ConfigError("alpha", "alpha must be a non-empty list of numbers > 0");
      for (double a : alpha) {
        if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("alpha", "alpha entries must be finite numbers > 0");
      }
      if (model == ModelKind::cir && alpha.size() != 1) {
        throw ConfigError("alpha", "the cir model is one-dimensional; give a single alpha");
      }
    }
    if ((model == ModelKind::dw || model == ModelKind::cir) && (!(beta > 0.0) || !std::isfinite(beta))) {
      throw ConfigError("beta", "beta must be a finite number > 0");
    }
    if (!(sigma_speed > 0.0) || !std::isfinite(sigma_speed)) {
      throw ConfigError("sigma_speed", "sigma_speed must be a finite number > 0");
    }
    for (std::size_t j = 0; j < schedule.size(); ++j) {
      if (!std::isfinite(schedule[j].t)) throw ConfigError("schedule", "times must be finite");
      if (j > 0 && !(schedule[j].t > schedule[j - 1].t)) {
        throw ConfigError("schedule", "times must be strictly increasing");
      }
    }
  }
};

/// Observation epochs plus, optionally, the latent signal summaries the
/// simulator saw (the total mass for dw, z for cir, x for wf).
struct Dataset {
  ModelKind model = ModelKind::fv;
  std::vector<Batch> batches;
  std::vector<std::vector<double>> latent;
};

// Exact transitions.

/// WF transition with a prebuilt lineage sampler, for repeated draws.
template <typename Rng>
std::vector<double> sim_wf_transition(std::span<const double> x, const LineageSampler& lineages,
                                      std::span<const double> alpha, Rng& rng) {
  const std::uint64_t m = lineages(rng);
  const auto counts = draw_multinomial(m, x, rng);
  std::vector<double> posterior(alpha.begin(), alpha.end());
  for (std::size_t j = 0; j < posterior.size(); ++j) posterior[j] += static_cast<double>(counts[j]);
  return draw_dirichlet(std::span<const double>(posterior), rng);
}

/// WF transition over time dt: x' ~ Dirichlet(alpha + counts), counts a
/// multinomial sample of the surviving lineages from x.
template <typename Rng>
std::vector<double> sim_wf_transition(std::span<const double> x, double dt, std::span<const double> alpha, Rng& rng,
                                      double sigma_speed = 1.0) {
  if (x.size() != alpha.size()) throw PreconditionError("sim_wf_transition: dimension mismatch");
  if (!(dt >= 0.0)) throw PreconditionError("sim_wf_transition requires dt >= 0");
  if (dt == 0.0) return {x.begin(), x.end()};
  const double theta = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  const LineageSampler lineages(dt, FvDualParams{theta, sigma_speed});
  return sim_wf_transition(x, lineages, alpha, rng);
}

/// CIR transition over time dt with stationary law Ga(alpha, beta).
template <typename Rng>
double sim_cir_transition(double z, double dt, double alpha, double beta, Rng& rng, double sigma_speed = 1.0) {
  if (!(z >= 0.0)) throw PreconditionError("sim_cir_transition requires z >= 0");
  if (!(dt > 0.0)) throw PreconditionError("sim_cir_transition requires dt > 0");
  const double sstar = dw_sstar(dt, DwDualParams{alpha, beta, sigma_speed});
  const std::uint64_t m = draw_poisson(z * sstar, rng);
  return draw_gamma(alpha + static_cast<double>(m), beta + sstar, rng);
}

namespace detail {

/// Blackwell-MacQueen urn over alpha = theta P0 conditioned on `pool`.
class PolyaUrn {
 public:
  PolyaUrn(const BaseMeasure& base, std::vector<double> pool) : base_(base), pool_(std::move(pool)) {}

  template <typename Rng>
  double draw(Rng& rng) {
    const double total = base_.theta + static_cast<double>(pool_.size());
    double y;
    if (std::uniform_real_distribution<double>(0.0, total)(rng) < base_.theta || pool_.empty()) {
      y = base_.sample(rng);
    } else {
      y = pool_[std::uniform_int_distribution<std::size_t>(0, pool_.size() - 1)(rng)];
    }
    pool_.push_back(y);
    return y;
  }

  template <typename Rng>
  std::vector<double> draw_n(std::uint64_t n, Rng& rng) {
    std::vector<double> out;
    out.reserve(n);
    for (std::uint64_t j = 0; j < n; ++j) out.push_back(draw(rng));
    return out;
  }

 private:
  const BaseMeasure& base_;
  std::vector<double> pool_;
};

// Stream indices within an epoch.
inline constexpr std::uint64_t kStreamBatch = 0;
inline constexpr std::uint64_t kStreamSeedCount = 1;
inline constexpr std::uint64_t kStreamSeeds = 2;
inline constexpr std::uint64_t kStreamLatent = 3;

inline void check_seed_cap(std::uint64_t m, const SimConfig& cfg) {
  if (m > cfg.max_seeds) {
    throw ResourceCapError("lineage count " + std::to_string(m) + " exceeds the cap of " +
                           std::to_string(cfg.max_seeds) + "; use larger gaps between epochs");
  }
}

}  // namespace detail

/// FV data by the marginal urn construction: each epoch's batch continues the
/// urn from the current seeds; between epochs the surviving lineages are
/// drawn from the urn continuing from seeds and data, and only they are kept.
inline Dataset sim_fv_hmm(const SimConfig& cfg) {
  cfg.validate();
  if (cfg.model != ModelKind::fv) throw ConfigError("model", "sim_fv_hmm needs model fv");
  Dataset out{ModelKind::fv, {}, {}};
  std::vector<double> seeds;
  for (std::size_t j = 0; j < cfg.schedule.size(); ++j) {
    KeyedStream batch_rng(cfg.seed, j, detail::kStreamBatch);
    detail::PolyaUrn urn(cfg.base, seeds);
    Batch batch{cfg.schedule[j].t, urn.draw_n(cfg.schedule[j].n, batch_rng)};
    if (j + 1 < cfg.schedule.size()) {
      const double dt = cfg.schedule[j + 1].t - cfg.schedule[j].t;
      KeyedStream count_rng(cfg.seed, j, detail::kStreamSeedCount);
      const std::uint64_t m = sample_lineage_count(dt, FvDualParams{cfg.base.theta, cfg.sigma_speed}, count_rng);
      detail::check_seed_cap(m, cfg);
      KeyedStream seed_rng(cfg.seed, j, detail::kStreamSeeds);
      seeds = urn.draw_n(m, seed_rng);
    }
    out.batches.push_back(std::move(batch));
  }
  return out;
}

/// DW data: the total mass is tracked exactly, point counts are Poisson in it
/// and locations follow the same urn construction as for FV.
inline Dataset sim_dw_hmm(const SimConfig& cfg) {
  cfg.validate();
  if (cfg.model != ModelKind::dw) throw ConfigError("model", "sim_dw_hmm needs model dw");
  Dataset out{ModelKind::dw, {}, {}};
  std::vector<double> seeds;
  KeyedStream init_rng(cfg.seed, std::uint64_t(-1), detail::kStreamLatent);
  double mass = draw_gamma(cfg.base.theta, cfg.beta, init_rng);
  const DwDualParams params{cfg.base.theta, cfg.beta, cfg.sigma_speed};
  for (std::size_t j = 0; j < cfg.schedule.size(); ++j) {
    KeyedStream batch_rng(cfg.seed, j, detail::kStreamBatch);
    const std::uint64_t n = draw_poisson(mass, batch_rng);
    detail::PolyaUrn urn(cfg.base, seeds);
    Batch batch{cfg.schedule[j].t, urn.draw_n(n, batch_rng)};
    out.latent.push_back({mass});
    if (j + 1 < cfg.schedule.size()) {
      const double dt = cfg.schedule[j + 1].t - cfg.schedule[j].t;
      const double sstar = dw_sstar(dt, params);
      KeyedStream count_rng(cfg.seed, j, detail::kStreamSeedCount);
      const std::uint64_t m = draw_poisson(mass * sstar, count_rng);
      detail::check_seed_cap(m, cfg);
      KeyedStream seed_rng(cfg.seed, j, detail::kStreamSeeds);
      seeds = urn.draw_n(m, seed_rng);
      KeyedStream latent_rng(cfg.seed, j, detail::kStreamLatent);
      mass = draw_gamma(cfg.base.theta + static_cast<double>(m), cfg.beta + sstar, latent_rng);
    }
    out.batches.push_back(std::move(batch));
  }
  return out;
}

/// WF data: category indices of n multinomial draws per epoch.
inline Dataset sim_wf_hmm(const SimConfig& cfg) {
  cfg.validate();
  if (cfg.model != ModelKind::wf) throw ConfigError("model", "sim_wf_hmm needs model wf");
  Dataset out{ModelKind::wf, {}, {}};
  KeyedStream init_rng(cfg.seed, std::uint64_t(-1), detail::kStreamLatent);
  std::vector<double> x = draw_dirichlet(std::span<const double>(cfg.alpha), init_rng);
  for (std::size_t j = 0; j < cfg.schedule.size(); ++j) {
    if (j > 0) {
      KeyedStream latent_rng(cfg.seed, j, detail::kStreamLatent);
      x = sim_wf_transition(std::span<const double>(x), cfg.schedule[j].t - cfg.schedule[j - 1].t,
                            std::span<const double>(cfg.alpha), latent_rng, cfg.sigma_speed);
    }
    KeyedStream batch_rng(cfg.seed, j, detail::kStreamBatch);
    Batch batch{cfg.schedule[j].t, {}};
    for (std::uint64_t i = 0; i < cfg.schedule[j].n; ++i) {
      batch.obs.push_back(static_cast<double>(draw_categorical(std::span<const double>(x), batch_rng)));
    }
    out.latent.push_back(x);
    out.batches.push_back(std::move(batch));
  }
  return out;
}

/// CIR data: n Poisson(z) counts per epoch.
inline Dataset sim_cir_hmm(const SimConfig& cfg) {
  cfg.validate();
  if (cfg.model != ModelKind::cir) throw ConfigError("model", "sim_cir_hmm needs model cir");
  Dataset out{ModelKind::cir, {}, {}};
  const double alpha = cfg.alpha.front();
  KeyedStream init_rng(cfg.seed, std::uint64_t(-1), detail::kStreamLatent);
  double z = draw_gamma(alpha, cfg.beta, init_rng);
  for (std::size_t j = 0; j < cfg.schedule.size(); ++j) {
    if (j > 0) {
      KeyedStream latent_rng(cfg.seed, j, detail::kStreamLatent);
      z = sim_cir_transition(z, cfg.schedule[j].t - cfg.schedule[j - 1].t, alpha, cfg.beta, latent_rng,
                             cfg.sigma_speed);
    }
    KeyedStream batch_rng(cfg.seed, j, detail::kStreamBatch);
    Batch batch{cfg.schedule[j].t, {}};
    for (std::uint64_t i = 0; i < cfg.schedule[j].n; ++i) batch.obs.push_back(static_cast<double>(draw_poisson(z, batch_rng)));
    out.latent.push_back({z});
    out.batches.push_back(std::move(batch));
  }
  return out;
}

inline Dataset simulate(const SimConfig& cfg) {
  switch (cfg.model) {
    case ModelKind::fv: return sim_fv_hmm(cfg);
    case ModelKind::dw: return sim_dw_hmm(cfg);
    case ModelKind::wf: return sim_wf_hmm(cfg);
    case ModelKind::cir: return sim_cir_hmm(cfg);
  }
  throw ConfigError("model", "unknown model");
}

// Duality checks.

/// h(x, m) = Gamma(theta + |m|)/Gamma(theta) prod_i Gamma(alpha_i)/Gamma(alpha_i + m_i) x_i^{m_i}.
inline double wf_duality_function(std::span<const double> x, const CountVector& m, std::span<const double> alpha) {
  const double theta = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  double log_h = log_rising(theta, static_cast<double>(total_of(m)));
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i] == 0) continue;
    if (x[i] <= 0.0) return 0.0;
    log_h += -log_rising(alpha[i], m[i]) + m[i] * std::log(x[i]);
  }
  return std::exp(log_h);
}

/// prod_i Gamma(alpha_i)/Gamma(alpha_i + m_i) ((beta + s)/beta)^{alpha_i} (beta + s)^{m_i} z_i^{m_i} e^{-s z_i}.
inline double cir_duality_function(std::span<const double> z, const CountVector& m, double s,
                                   std::span<const double> alpha, double beta) {
  double log_h = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    log_h += -log_rising(alpha[i], m[i]) + alpha[i] * std::log1p(s / beta) + m[i] * std::log(beta + s) - s * z[i];
    if (m[i] > 0) {
      if (z[i] <= 0.0) return 0.0;
      log_h += m[i] * std::log(z[i]);
    }
  }
  return std::exp(log_h);
}

struct DualityReport {
  double simulated = 0.0;  // Monte Carlo estimate of E^{x0}[h(X_t, m)]
  double exact = 0.0;      // sum_n p_{m,n}(t) h(x0, n)
  double standard_error = 0.0;
  double z = 0.0;
};

namespace detail {

template <typename Draw>
DualityReport finish_duality(std::uint64_t samples, double exact, Draw&& draw) {
  CompensatedSum<> sum;
  CompensatedSum<> sum_sq;
  for (std::uint64_t k = 0; k < samples; ++k) {
    const double h = draw(k);
    sum.add(h);
    sum_sq.add(h * h);
  }
  const double n = static_cast<double>(samples);
  const double mean = sum.value() / n;
  const double var = std::max(0.0, (sum_sq.value() / n - mean * mean) * n / (n - 1.0));
  DualityReport out{mean, exact, std::sqrt(var / n), 0.0};
  const double diff = out.simulated - out.exact;
  if (out.standard_error > 0.0) {
    out.z = diff / out.standard_error;
  } else if (std::abs(diff) > 1e-12 * std::max(1.0, std::abs(exact))) {
    out.z = std::copysign(std::numeric_limits<double>::infinity(), diff);
  }
  return out;
}

}  // namespace detail

/// Monte Carlo check of E^{x0}[h(X_t, m)] = E^m[h(x0, M_t)] for the WF signal.
inline DualityReport mc_duality_check(std::span<const double> x0, const CountVector& m, double t,
                                      std::span<const double> alpha, std::uint64_t samples, std::uint64_t seed,
                                      double sigma_speed = 1.0) {
  if (samples < 1000) throw PreconditionError("mc_duality_check needs at least 1000 samples");
  if (x0.size() != alpha.size() || m.size() != alpha.size()) throw PreconditionError("dimension mismatch");
  const double theta = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  const FvDualParams params{theta, sigma_speed};
  const MultiplicityVector sparse = to_sparse(m);
  CompensatedSum<> exact;
  for_each_below(sparse, [&](const MultiplicityVector& n) {
    exact.add(fv_death_prob(sparse, n, t, params) * wf_duality_function(x0, to_dense(n, m.size()), alpha));
  });
  if (t == 0.0) {
    const double h = wf_duality_function(x0, m, alpha);
    return DualityReport{h, exact.value(), 0.0, 0.0};
  }
  const LineageSampler lineages(t, params);
  return detail::finish_duality(samples, exact.value(), [&](std::uint64_t k) {
    KeyedStream rng(seed, 0, k);
    const auto x = sim_wf_transition(x0, lineages, alpha, rng);
    return wf_duality_function(x, m, alpha);
  });
}

/// Monte Carlo check of the multi-CIR duality with the gamma death process.
inline DualityReport mc_duality_check_cir(std::span<const double> z0, const CountVector& m, double s, double t,
                                          std::span<const double> alpha, double beta, std::uint64_t samples,
                                          std::uint64_t seed, double sigma_speed = 1.0) {
  if (samples < 1000) throw PreconditionError("mc_duality_check needs at least 1000 samples");
  if (z0.size() != alpha.size() || m.size() != alpha.size()) throw PreconditionError("dimension mismatch");
  const double theta = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  const DwDualParams params{theta, beta, sigma_speed};
  const MultiplicityVector sparse = to_sparse(m);
  const double s_t = dw_s_decay(s, t, params).state.s;
  CompensatedSum<> exact;
  for_each_below(sparse, [&](const MultiplicityVector& n) {
    exact.add(dw_death_prob(sparse, n, t, s, params) *
              cir_duality_function(z0, to_dense(n, m.size()), s_t, alpha, beta));
  });
  if (t == 0.0) {
    const double h = cir_duality_function(z0, m, s, alpha, beta);
    return DualityReport{h, exact.value(), 0.0, 0.0};
  }
  return detail::finish_duality(samples, exact.value(), [&](std::uint64_t k) {
    KeyedStream rng(seed, 0, k);
    std::vector<double> z(z0.size());
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = sim_cir_transition(z0[i], t, alpha[i], beta, rng, sigma_speed);
    return cir_duality_function(z, m, s, alpha, beta);
  });
}

// Oracles.

struct OracleStep {
  std::vector<double> mean;
  std::vector<double> standard_error;
  double min_ess_fraction = 1.0;
};

struct ParticleOracleResult {
  std::vector<OracleStep> steps;
  bool degenerate = false;  // effective sample size fell below N/100 somewhere
};

/// Bootstrap particle filter with exact WF transitions and multinomial
/// likelihood. N particles are split into `replicates` independent filters;
/// the spread of their means gives the Monte Carlo standard error.
inline ParticleOracleResult particle_oracle_wf(std::span<const CategoryBatch> data, std::span<const double> alpha,
                                               std::uint64_t particles, std::uint64_t seed,
                                               std::uint64_t replicates = 40, double sigma_speed = 1.0,
                                               unsigned threads = 1) {
  if (replicates < 2 || particles < replicates) throw PreconditionError("particle_oracle_wf: too few particles");
  const std::size_t k = alpha.size();
  const std::uint64_t per = particles / replicates;
  const double theta = std::accumulate(alpha.begin(), alpha.end(), 0.0);
  std::vector<std::vector<std::vector<double>>> means(replicates, std::vector<std::vector<double>>(data.size()));
  std::vector<std::vector<double>> ess(replicates, std::vector<double>(data.size(), 1.0));

  std::vector<std::unique_ptr<LineageSampler>> samplers(data.size());
  for (std::size_t j = 1; j < data.size(); ++j) {
    samplers[j] = std::make_unique<LineageSampler>(data[j].t - data[j - 1].t, FvDualParams{theta, sigma_speed});
  }

  parallel_chunks(replicates, threads, [&](std::size_t r) {
    std::vector<std::vector<double>> x(per);
    KeyedStream init(seed, std::uint64_t(-1), r);
    for (auto& xi : x) xi = draw_dirichlet(alpha, init);
    std::vector<double> logw(per);
    for (std::size_t j = 0; j < data.size(); ++j) {
      KeyedStream rng(seed, j, r);
      if (j > 0) {
        for (auto& xi : x) xi = sim_wf_transition(std::span<const double>(xi), *samplers[j], alpha, rng);
      }
      const auto& counts = data[j].counts;
      for (std::uint64_t i = 0; i < per; ++i) {
        double lw = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
          if (counts[c] > 0) lw += counts[c] * std::log(x[i][c]);
        }
        logw[i] = lw;
      }
      const double lse = log_sum_exp(logw);
      std::vector<double> w(per);
      double sum_sq = 0.0;
      for (std::uint64_t i = 0; i < per; ++i) {
        w[i] = std::exp(logw[i] - lse);
        sum_sq += w[i] * w[i];
      }
      ess[r][j] = 1.0 / sum_sq / static_cast<double>(per);
      std::vector<double> mean(k, 0.0);
      for (std::uint64_t i = 0; i < per; ++i) {
        for (std::size_t c = 0; c < k; ++c) mean[c] += w[i] * x[i][c];
      }
      means[r][j] = mean;
      // Systematic resampling.
      std::vector<std::vector<double>> next(per);
      const double u0 = rng.uniform() / static_cast<double>(per);
      double cum = w[0];
      std::uint64_t src = 0;
      for (std::uint64_t i = 0; i < per; ++i) {
        const double u = u0 + static_cast<double>(i) / static_cast<double>(per);
        while (u > cum && src + 1 < per) cum += w[++src];
        next[i] = x[src];
      }
      x = std::move(next);
    }
  });

  ParticleOracleResult out;
  for (std::size_t j = 0; j < data.size(); ++j) {
    OracleStep step{std::vector<double>(k, 0.0), std::vector<double>(k, 0.0), 1.0};
    for (std::size_t c = 0; c < k; ++c) {
      double sum = 0.0;
      double sum_sq = 0.0;
      for (std::uint64_t r = 0; r < replicates; ++r) {
        sum += means[r][j][c];
        sum_sq += means[r][j][c] * means[r][j][c];
      }
      const double rd = static_cast<double>(replicates);
      const double mean = sum / rd;
      const double var = std::max(0.0, (sum_sq / rd - mean * mean) * rd / (rd - 1.0));
      step.mean[c] = mean;
      step.standard_error[c] = std::sqrt(var / rd);
    }
    for (std::uint64_t r = 0; r < replicates; ++r) step.min_ess_fraction = std::min(step.min_ess_fraction, ess[r][j]);
    if (step.min_ess_fraction < 0.01) out.degenerate = true;
    out.steps.push_back(std::move(step));
  }
  return out;
}

struct GridSpec {
  std::size_t points = 2000;
  double z_max = 50.0;
};

struct GridStep {
  double mean = 0.0;
  double variance = 0.0;
  double boundary_mass = 0.0;
};

struct GridOracleResult {
  std::vector<GridStep> steps;
  bool coverage_warning = false;  // mass near the upper grid edge exceeded 1e-8
};

/// Forward filter for the one-dimensional CIR signal on a midpoint grid,
/// propagated with the transition density written as a Poisson mixture of
/// gamma densities, truncated once the Poisson tail is below 1e-12.
inline GridOracleResult grid_oracle_cir(std::span<const PoissonBatch> data, double alpha, double beta,
                                        const GridSpec& grid, double sigma_speed = 1.0) {
  if (grid.points < 10 || !(grid.z_max > 0.0)) throw PreconditionError("grid_oracle_cir: invalid grid");
  const std::size_t g = grid.points;
  const double h = grid.z_max / static_cast<double>(g);
  std::vector<double> z(g);
  for (std::size_t i = 0; i < g; ++i) z[i] = (static_cast<double>(i) + 0.5) * h;
  auto gamma_log_density = [](double x, double shape, double rate) {
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
  };
  auto normalise = [&](std::vector<double>& p) {
    double total = 0.0;
    for (double v : p) total += v * h;
    for (double& v : p) v /= total;
  };
  std::vector<double> density(g);
  for (std::size_t i = 0; i < g; ++i) density[i] = std::exp(gamma_log_density(z[i], alpha, beta));
  normalise(density);

  GridOracleResult out;
  const DwDualParams params{alpha, beta, sigma_speed};
  for (std::size_t j = 0; j < data.size(); ++j) {
    if (j > 0) {
      const double sstar = dw_sstar(data[j].t - data[j - 1].t, params);
      std::vector<double> next(g, 0.0);
      double covered = 0.0;
      for (std::uint64_t m = 0; covered < 1.0 - 1e-12 && m < 100000; ++m) {
        double q = 0.0;
        for (std::size_t i = 0; i < g; ++i) {
          const double mean = z[i] * sstar;
          const double log_po = static_cast<double>(m) * std::log(mean) - mean - log_factorial(m);
          q += density[i] * h * std::exp(log_po);
        }
        covered += q;
        if (q == 0.0) continue;
        for (std::size_t i = 0; i < g; ++i) {
          next[i] += q * std::exp(gamma_log_density(z[i], alpha + static_cast<double>(m), beta + sstar));
        }
      }
      density = std::move(next);
      normalise(density);
    }
    const auto& values = data[j].values;
    if (!values.empty()) {
      const double y = std::accumulate(values.begin(), values.end(), 0.0);
      const double n = static_cast<double>(values.size());
      std::vector<double> logp(g);
      for (std::size_t i = 0; i < g; ++i) logp[i] = std::log(density[i]) + y * std::log(z[i]) - n * z[i];
      const double top = *std::max_element(logp.begin(), logp.end());
      for (std::size_t i = 0; i < g; ++i) density[i] = std::exp(logp[i] - top);
      normalise(density);
    }
    GridStep step;
    double second = 0.0;
    for (std::size_t i = 0; i < g; ++i) {
      step.mean += z[i] * density[i] * h;
      second += z[i] * z[i] * density[i] * h;
    }
    step.variance = second - step.mean * step.mean;
    for (std::size_t i = g - g / 100; i < g; ++i) step.boundary_mass += density[i] * h;
    if (step.boundary_mass > 1e-8) out.coverage_warning = true;
    out.steps.push_back(step);
  }
  return out;
}

}  // namespace measure_filter
