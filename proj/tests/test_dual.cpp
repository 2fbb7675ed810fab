#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "measure_filter/dual.hpp"
#include "measure_filter/oracles.hpp"
#include "measure_filter/random.hpp"

namespace mf = measure_filter;
using mf::MultiplicityVector;

namespace {

MultiplicityVector dense(std::initializer_list<mf::Count> c) { return MultiplicityVector::from_dense(c); }

// Row `start` of exp(Q tau) for the pure-death chain on {0..start} with rates lambda_n.
std::vector<double> level_chain_expm(std::size_t start, double theta, double tau) {
  const auto size = static_cast<Eigen::Index>(start + 1);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(size, size);
  for (Eigen::Index n = 1; n < size; ++n) {
    const double rate = n * (theta + n - 1.0) / 2.0;
    q(n, n) = -rate;
    q(n, n - 1) = rate;
  }
  const Eigen::MatrixXd p = (q * tau).exp();
  std::vector<double> row(start + 1);
  for (Eigen::Index k = 0; k < size; ++k) row[static_cast<std::size_t>(k)] = p(size - 1, k);
  return row;
}

}  // namespace

TEST(LambdaRate, Examples) {
  EXPECT_DOUBLE_EQ(mf::lambda_rate(0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(mf::lambda_rate(3, 1.0), 4.5);
  EXPECT_DOUBLE_EQ(mf::lambda_rate(3, 2.0), 6.0);
}

TEST(BlockCoeff, ClosedFormExamples) {
  const mf::FvDualParams p{1.0, 1.0};
  for (double t : {0.01, 0.3, 1.0, 5.0}) {
    EXPECT_NEAR(mf::block_coeff(1, 1, t, p), 1.0 - std::exp(-0.5 * t), 1e-14);
    EXPECT_NEAR(mf::block_coeff(2, 1, t, p), 4.0 / 3.0 * (std::exp(-0.5 * t) - std::exp(-2.0 * t)), 1e-14);
  }
  for (std::uint64_t total = 1; total < 6; ++total) {
    for (std::uint64_t dead = 1; dead <= total; ++dead) EXPECT_EQ(mf::block_coeff(total, dead, 0.0, p), 0.0);
  }
  EXPECT_THROW(mf::block_coeff(2, 0, 1.0, p), mf::PreconditionError);
  EXPECT_THROW(mf::block_coeff(2, 3, 1.0, p), mf::PreconditionError);
}

TEST(BlockCoeff, SigmaActsAsTimeScale) {
  EXPECT_NEAR(mf::block_coeff(5, 2, 0.4, {1.5, 2.0}), mf::block_coeff(5, 2, 0.8, {1.5, 1.0}), 1e-15);
}

TEST(BlockCoeff, LevelProbabilitiesMatchTridiagonalExpm) {
  for (double theta : {0.5, 1.0, 3.0}) {
    for (double t : {0.01, 0.1, 1.0, 10.0}) {
      for (std::uint64_t total : {1u, 4u, 9u, 15u}) {
        const auto got = mf::fv_level_probabilities(total, t, {theta, 1.0});
        const auto want = level_chain_expm(total, theta, t);
        double sum = 0.0;
        for (std::uint64_t dead = 0; dead <= total; ++dead) {
          EXPECT_NEAR(got[dead], want[total - dead], 1e-10) << theta << " " << t << " " << total << " " << dead;
          sum += got[dead];
        }
        EXPECT_NEAR(sum, 1.0, 1e-10);
      }
    }
  }
}

TEST(BlockCoeff, SmallTimeLargeTotalEscalatesAndStaysNonnegative) {
  const mf::FvDualParams p{1.0, 1.0};
  bool any_extended = false;
  double sum = 0.0;
  const auto first = std::exp(-mf::lambda_rate(40, 1.0) * 1e-3);
  sum += first;
  for (std::uint64_t dead = 1; dead <= 40; ++dead) {
    const auto c = mf::block_coeff_detailed(40, dead, 1e-3, p);
    EXPECT_GT(c.raw, -1e-9);
    EXPECT_GE(c.value, 0.0);
    any_extended = any_extended || c.extended;
    sum += c.value;
  }
  EXPECT_TRUE(any_extended);
  EXPECT_NEAR(sum, 1.0, 1e-10);
}

TEST(FvDeathProb, Examples) {
  const mf::FvDualParams p{1.0, 1.0};
  for (double t : {0.1, 1.0, 4.0}) {
    EXPECT_NEAR(mf::fv_death_prob(dense({1}), dense({1}), t, p), std::exp(-0.5 * t), 1e-15);
    EXPECT_NEAR(mf::fv_death_prob(dense({1}), dense({0}), t, p), 1.0 - std::exp(-0.5 * t), 1e-14);
  }
  EXPECT_NEAR(mf::fv_death_prob(dense({2, 1}), dense({2, 1}), 0.2, p), std::exp(-0.9), 1e-15);
  EXPECT_NEAR(std::exp(-0.9), 0.40657, 1e-5);
  EXPECT_THROW(mf::fv_death_prob(dense({1}), dense({2}), 0.2, p), mf::PreconditionError);
}

TEST(FvDeathProb, RowsMatchLatticeExpmAndSumToOne) {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 12; ++rep) {
    std::vector<std::uint32_t> c(1 + rng() % 3);
    for (auto& x : c) x = static_cast<std::uint32_t>(rng() % 4);
    const auto m = MultiplicityVector::from_dense(std::span<const mf::Count>(c));
    const double theta = std::vector<double>{0.5, 1.0, 3.0}[rep % 3];
    const double t = 0.05 + 0.3 * rep;
    const auto oracle = mf::oracle::death_process_row(c, theta, t);
    double sum = 0.0;
    for (const auto& [n, want] : oracle) {
      const double got = mf::fv_death_prob(m, MultiplicityVector::from_dense(std::span<const mf::Count>(n)), t, {theta});
      EXPECT_NEAR(got, want, 1e-10);
      sum += got;
    }
    EXPECT_NEAR(sum, 1.0, 1e-10);
  }
}

TEST(FvDeathProb, ChapmanKolmogorov) {
  const auto m = dense({3, 2, 1});
  const mf::FvDualParams p{1.3, 1.0};
  const double t = 0.4;
  const double u = 0.7;
  for (const auto& k : mf::down_set(m)) {
    double composed = 0.0;
    for (const auto& n : mf::down_set(m)) {
      if (mf::leq(k, n)) composed += mf::fv_death_prob(m, n, t, p) * mf::fv_death_prob(n, k, u, p);
    }
    EXPECT_NEAR(composed, mf::fv_death_prob(m, k, t + u, p), 1e-10);
  }
}

TEST(LevelTable, RowsMatchDirectEvaluation) {
  const mf::LevelTable table({2.0, 1.0}, 0.3);
  table.prepare(6);
  for (std::uint64_t total = 0; total <= 8; ++total) {
    EXPECT_EQ(table.row(total), mf::fv_level_probabilities(total, 0.3, {2.0, 1.0}));
  }
}

TEST(LineageSampler, StartLevelMeetsTruncationRule) {
  for (double t : {1e-3, 0.1, 2.0}) {
    const mf::LineageSampler s(t, {1.0, 1.0});
    const auto [mean, var] = mf::LineageSampler::entrance_moments(s.start_level(), 1.0);
    EXPECT_LT(std::sqrt(var), 1e-3 * t);
    EXPECT_LT(mean + 10.0 * std::sqrt(var), t);
  }
  EXPECT_THROW(mf::LineageSampler(0.0, {1.0, 1.0}), mf::PreconditionError);
}

TEST(LineageSampler, EntranceMomentsMatchLongSums) {
  // Exact series summed to 2e6 terms plus the leading tail term.
  const std::uint64_t level = 100;
  const double theta = 2.5;
  double mean = 0.0;
  double var = 0.0;
  const std::uint64_t last = 2'000'000;
  for (std::uint64_t k = last; k > level; --k) {
    const double inv = 1.0 / mf::lambda_rate(k, theta);
    mean += inv;
    var += inv * inv;
  }
  mean += 2.0 / static_cast<double>(last);
  const auto [m, v] = mf::LineageSampler::entrance_moments(level, theta);
  EXPECT_NEAR(m, mean, 1e-9 * mean);
  EXPECT_NEAR(v, var, 1e-6 * var);
}

TEST(LineageSampler, LargeTimeAbsorbs) {
  mf::KeyedStream rng(1);
  const mf::LineageSampler s(200.0, {1.0, 1.0});
  int zeros = 0;
  for (int j = 0; j < 1000; ++j) zeros += s(rng) == 0;
  EXPECT_EQ(zeros, 1000);
}

TEST(LineageSampler, DistributionMatchesMatrixExponential) {
  // Oracle: expm of the chain started at a finite level K, run for tau minus
  // the mean time to come down from infinity to K.
  const double theta = 1.0;
  const double tau = 0.2;
  const std::size_t start = 300;
  double entrance = 2.0 / 1e7;
  for (std::uint64_t k = 10'000'000; k > start; --k) entrance += 1.0 / mf::lambda_rate(k, theta);
  const auto want = level_chain_expm(start, theta, tau - entrance);

  const mf::LineageSampler sampler(tau, {theta, 1.0});
  mf::KeyedStream rng(2024);
  const int draws = 100'000;
  std::map<std::uint64_t, int> hist;
  for (int j = 0; j < draws; ++j) ++hist[sampler(rng)];
  double worst = 0.0;
  for (std::size_t k = 0; k <= 40; ++k) {
    const double p = want[k];
    if (p < 1e-4) continue;
    const double se = std::sqrt(p * (1.0 - p) / draws);
    worst = std::max(worst, std::abs(hist[k] / static_cast<double>(draws) - p) / se);
  }
  // About 25 levels are compared, so allow the 4-sigma band.
  EXPECT_LT(worst, 4.0);
}

TEST(DwDecay, ClosedFormAndLimits) {
  const mf::DwDualParams p{1.0, 1.0, 1.0};
  auto d = mf::dw_s_decay(1.0, 2.0 * std::log(2.0), p);
  EXPECT_NEAR(d.state.s, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(d.survival, 1.0 / 3.0, 1e-15);
  d = mf::dw_s_decay(2.5, 0.0, p);
  EXPECT_EQ(d.state.s, 2.5);
  EXPECT_EQ(d.survival, 1.0);
  EXPECT_LT(mf::dw_s_decay(5.0, 100.0, p).state.s, 1e-20);
}

TEST(DwDecay, MatchesRk4AndSemigroup) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.1, 3.0);
  for (int rep = 0; rep < 10; ++rep) {
    const double beta = u(rng);
    const double s0 = u(rng);
    const double t = 3.0 * u(rng);
    const double tt = u(rng);
    const mf::DwDualParams p{1.0, beta, 1.0};
    EXPECT_NEAR(mf::dw_s_decay(s0, t, p).state.s, mf::oracle::rk4_dual(s0, beta, t, 20000), 1e-10);
    const double two_step = mf::dw_s_decay(mf::dw_s_decay(s0, t, p).state.s, tt, p).state.s;
    EXPECT_NEAR(two_step, mf::dw_s_decay(s0, t + tt, p).state.s, 1e-13);
    EXPECT_NEAR(mf::dw_s_decay(s0, t, p).survival, mf::oracle::cir_survival(s0, beta, t), 1e-13);
  }
}

TEST(DwDecay, ZeroOffsetSurvivalIsTheLimit) {
  // With s = 0 each lineage dies at rate beta / 2.
  const mf::DwDualParams p{1.0, 2.0, 1.0};
  EXPECT_NEAR(mf::dw_s_decay(0.0, 0.7, p).survival, std::exp(-0.7), 1e-15);
  EXPECT_NEAR(mf::dw_s_decay(1e-12, 0.7, p).survival, std::exp(-0.7), 1e-12);
  EXPECT_EQ(mf::dw_s_decay(0.0, 0.7, p).state.s, 0.0);
}

TEST(DwSstar, Examples) {
  EXPECT_NEAR(mf::dw_sstar(2.0 * std::log(2.0), {1.0, 1.0, 1.0}), 1.0, 1e-14);
  EXPECT_GT(mf::dw_sstar(1e-9, {1.0, 1.0, 1.0}), 1e8);
  EXPECT_LT(mf::dw_sstar(100.0, {1.0, 1.0, 1.0}), 1e-20);
  EXPECT_THROW(mf::dw_sstar(0.0, {1.0, 1.0, 1.0}), mf::PreconditionError);
}

TEST(DwDeathProb, Examples) {
  const mf::DwDualParams p{1.0, 1.0, 1.0};
  const double t = 2.0 * std::log(2.0);  // p(t) = 1/3 from s0 = 1
  EXPECT_NEAR(mf::dw_death_prob(dense({2, 1}), dense({1, 1}), t, 1.0, p), 4.0 / 27.0, 1e-15);
  EXPECT_EQ(mf::dw_death_prob(dense({2, 1}), dense({2, 1}), 0.0, 1.0, p), 1.0);
  EXPECT_EQ(mf::dw_death_prob(dense({2, 1}), dense({1, 1}), 0.0, 1.0, p), 0.0);
  EXPECT_NEAR(mf::dw_death_prob(dense({2, 1}), dense({}), 200.0, 1.0, p), 1.0, 1e-15);
}

TEST(DwDeathProb, EqualsProductOfOneDimensionalThinnings) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<std::uint32_t> c(1 + rng() % 4);
    for (auto& x : c) x = static_cast<std::uint32_t>(rng() % 3);
    const auto m = MultiplicityVector::from_dense(std::span<const mf::Count>(c));
    const double beta = u(rng);
    const double s0 = u(rng);
    const double t = u(rng);
    const auto oracle = mf::oracle::product_thinning(c, mf::oracle::cir_survival(s0, beta, t));
    double sum = 0.0;
    for (const auto& [n, want] : oracle) {
      const double got =
          mf::dw_death_prob(m, MultiplicityVector::from_dense(std::span<const mf::Count>(n)), t, s0, {1.0, beta, 1.0});
      EXPECT_NEAR(got, want, 1e-12);
      sum += got;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(DwDeathProb, PaperLiteralConventionMirrorsTheBinomial) {
  const mf::DwDualParams p{1.0, 1.0, 1.0};
  const double t = 2.0 * std::log(2.0);
  const auto lit = mf::dw_death_prob(dense({2, 1}), dense({1, 1}), t, 1.0, p, mf::BinomialConvention::paper_literal);
  EXPECT_NEAR(lit, mf::binom_pmf(1, 3, 1.0 / 3.0) * 2.0 / 3.0, 1e-15);
}
