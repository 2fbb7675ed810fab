#include <gtest/gtest.h>

#include <cmath>

#include "measure_filter/io.hpp"
#include "measure_filter/random_measures.hpp"

namespace mf = measure_filter;
using mf::MultiplicityVector;

namespace {

MultiplicityVector dense(std::initializer_list<mf::Count> c) { return MultiplicityVector::from_dense(c); }

mf::FvFilterState single_component(std::initializer_list<mf::Count> m, std::vector<double> atoms, double theta = 1.0) {
  auto state = mf::new_fv_prior({theta, mf::UniformP0{0.0, 1.0}});
  state.registry = mf::AtomRegistry::from_values(atoms);
  state.components = {{dense(m), 1.0}};
  return state;
}

}  // namespace

TEST(Prior, SingleUnitComponent) {
  const auto fv = mf::new_fv_prior({1.0, mf::UniformP0{0.0, 1.0}});
  ASSERT_EQ(fv.components.size(), 1u);
  EXPECT_EQ(fv.components.begin()->first, MultiplicityVector{});
  EXPECT_EQ(fv.components.begin()->second, 1.0);
  EXPECT_EQ(fv.registry.size(), 0u);
  const auto dw = mf::new_dw_prior({1.0, mf::UniformP0{0.0, 1.0}}, 2.0);
  EXPECT_EQ(dw.s, 0.0);
  EXPECT_EQ(dw.beta, 2.0);
  EXPECT_NO_THROW(mf::check_invariants(dw));
}

TEST(Prior, InvalidParametersNameTheField) {
  try {
    mf::new_fv_prior({0.0, mf::UniformP0{}});
    FAIL();
  } catch (const mf::ConfigError& e) {
    EXPECT_EQ(e.field(), "theta");
  }
  try {
    mf::new_fv_prior({1.0, mf::GaussianP0{0.0, -1.0}});
    FAIL();
  } catch (const mf::ConfigError& e) {
    EXPECT_EQ(e.field(), "p0");
  }
  try {
    mf::new_dw_prior({1.0, mf::UniformP0{}}, 0.0);
    FAIL();
  } catch (const mf::ConfigError& e) {
    EXPECT_EQ(e.field(), "beta");
  }
}

TEST(Registry, AppendOnlyExactMatching) {
  mf::AtomRegistry r;
  EXPECT_EQ(r.intern(0.3), 0u);
  EXPECT_EQ(r.intern(0.7), 1u);
  EXPECT_EQ(r.intern(0.3), 0u);
  EXPECT_FALSE(r.find(0.30000000000000004));
  EXPECT_THROW(r.intern(std::nan("")), mf::PreconditionError);
  const std::vector<double> dup{1.0, 1.0};
  EXPECT_THROW(mf::AtomRegistry::from_values(dup), mf::PreconditionError);
}

TEST(PredictiveDensity, UrnWeights) {
  const auto prior = mf::new_fv_prior({1.0, mf::UniformP0{0.0, 1.0}});
  EXPECT_DOUBLE_EQ(mf::predictive_density(prior, 0.4), 1.0);
  const auto s = single_component({2, 1}, {0.2, 0.6});
  EXPECT_DOUBLE_EQ(mf::predictive_density(s, 0.2), 0.5);
  EXPECT_DOUBLE_EQ(mf::predictive_density(s, 0.9), 0.25);
}

TEST(PredictiveDensity, IntegratesToOne) {
  auto s = mf::new_fv_prior({1.7, mf::UniformP0{-1.0, 2.0}});
  s.registry = mf::AtomRegistry::from_values(std::vector<double>{0.1, 0.5, 1.5});
  s.components = {{dense({2, 1, 0}), 0.3}, {dense({0, 0, 4}), 0.5}, {dense({}), 0.2}};
  double atoms = 0.0;
  for (double y : s.registry.atoms()) atoms += mf::predictive_density(s, y);
  const int cells = 300000;
  double continuous = 0.0;
  for (int i = 0; i < cells; ++i) {
    const double y = -1.5 + 4.0 * (i + 0.5) / cells;
    if (!s.registry.find(y)) continuous += mf::predictive_density(s, y) * 4.0 / cells;
  }
  EXPECT_NEAR(atoms + continuous, 1.0, 1e-6);
}

TEST(MeanMeasure, Examples) {
  const auto prior = mf::new_fv_prior({2.0, mf::UniformP0{0.0, 1.0}});
  const std::vector<double> cuts{0.25};
  auto cells = mf::partition_by_cuts(prior, cuts);
  auto mean = mf::mean_measure(prior, cells);
  EXPECT_NEAR(mean[0], 0.25, 1e-15);
  EXPECT_NEAR(mean[1], 0.75, 1e-15);

  const auto s = single_component({2, 1}, {0.2, 0.4});
  const std::vector<double> half{0.5};
  cells = mf::partition_by_cuts(s, half);
  mean = mf::mean_measure(s, cells);
  EXPECT_NEAR(mean[0], 0.875, 1e-15);
  EXPECT_NEAR(mf::mean_atom_mass(s, 0), 0.5, 1e-15);

  const auto dw = mf::new_dw_prior({3.0, mf::UniformP0{0.0, 1.0}}, 2.0);
  EXPECT_NEAR(mf::mean_total_mass(dw), 1.5, 1e-15);
}

TEST(MeanMeasure, InvalidPartitionRejected) {
  const auto s = single_component({2, 1}, {0.2, 0.4});
  mf::CellPartition bad{mf::Partition::identity(2), {0.5, 0.6}};
  EXPECT_THROW(mf::mean_measure(s, bad), mf::PreconditionError);
  mf::CellPartition short_map{mf::Partition::identity(1), {1.0}};
  EXPECT_THROW(mf::mean_measure(s, short_map), mf::PreconditionError);
}

TEST(ProjectState, Examples) {
  const auto prior = mf::new_fv_prior({2.0, mf::UniformP0{0.0, 1.0}});
  const std::vector<double> cuts{0.25};
  const auto d = mf::project_state(prior, mf::partition_by_cuts(prior, cuts));
  EXPECT_NEAR(d.alpha[0], 0.5, 1e-15);
  EXPECT_NEAR(d.alpha[1], 1.5, 1e-15);

  const auto s = single_component({2, 1}, {0.2, 0.4});
  mf::CellPartition one{mf::Partition::single_cell(2), {1.0}};
  const auto merged = mf::project_state(s, one);
  ASSERT_EQ(merged.components.size(), 1u);
  EXPECT_EQ(merged.components.begin()->first, mf::CountVector{3});
  EXPECT_DOUBLE_EQ(merged.theta() + 3, 4.0);

  auto mix = single_component({1, 0}, {0.2, 0.4});
  mix.components = {{dense({1, 0}), 0.5}, {dense({0, 1}), 0.5}};
  mf::CellPartition ident{mf::Partition::identity(2), {0.5, 0.5}};
  const auto two = mf::project_state(mix, ident);
  EXPECT_EQ(two.components.size(), 2u);
  EXPECT_DOUBLE_EQ(two.components.at({1, 0}), 0.5);
  EXPECT_DOUBLE_EQ(two.components.at({0, 1}), 0.5);
}

TEST(ProjectState, MeanOfProjectionEqualsMeanMeasure) {
  auto s = mf::new_fv_prior({1.3, mf::GaussianP0{0.0, 1.0}});
  s.registry = mf::AtomRegistry::from_values(std::vector<double>{-0.4, 0.1, 0.9, 2.2});
  s.components = {{dense({2, 1, 0, 1}), 0.1}, {dense({0, 3, 1}), 0.6}, {dense({1}), 0.3}};
  const std::vector<double> cuts{-1.0, 0.5, 1.0};
  const auto cells = mf::partition_by_cuts(s, cuts);
  const auto direct = mf::mean_measure(s, cells);
  const auto projected = mf::wf_mean(mf::project_state(s, cells));
  for (std::size_t j = 0; j < direct.size(); ++j) EXPECT_NEAR(direct[j], projected[j], 1e-12);

  mf::DwFilterState dw;
  static_cast<mf::FvFilterState&>(dw) = s;
  dw.beta = 1.5;
  dw.s = 0.8;
  const auto dw_direct = mf::mean_measure(dw, cells);
  const auto g = mf::project_state(dw, cells);
  for (std::size_t j = 0; j < dw_direct.size(); ++j) {
    EXPECT_NEAR(dw_direct[j], mf::gamma_mean_variance(g, j).mean, 1e-12);
  }
}

TEST(Prune, Examples) {
  auto s = single_component({1}, {0.5});
  s.components = {{dense({1}), 0.9995}, {dense({}), 0.0005}};
  const auto same = mf::prune(s, 0.0);
  EXPECT_EQ(same.components, s.components);
  const auto pruned = mf::prune(s, 1e-3);
  ASSERT_EQ(pruned.components.size(), 1u);
  EXPECT_DOUBLE_EQ(pruned.components.begin()->second, 1.0);
  EXPECT_NEAR(pruned.pruned_mass, 0.0005, 1e-18);
  EXPECT_THROW(mf::prune(s, 1.0), mf::PreconditionError);
}

TEST(Prune, NeverDropsHeaviest) {
  auto s = single_component({1}, {0.5});
  s.components = {{dense({1}), 0.4}, {dense({}), 0.6}};
  const auto pruned = mf::prune(s, 0.9);
  ASSERT_EQ(pruned.components.size(), 1u);
  EXPECT_EQ(pruned.components.begin()->first, MultiplicityVector{});
}

TEST(Weights, PriorAndFullInformation) {
  auto s = single_component({2, 1}, {0.2, 0.4});
  s.components = {{dense({2, 1}), 0.6}, {dense({1, 1}), 0.3}, {dense({}), 0.1}};
  EXPECT_DOUBLE_EQ(mf::weight_fullinfo(s.components), 0.6);
  EXPECT_DOUBLE_EQ(mf::weight_prior(s.components), 0.1);
}

TEST(Serialization, StatesRoundTripByteIdentically) {
  auto s = mf::new_dw_prior({1.25, mf::GaussianP0{0.5, 2.0}}, 0.75);
  s.registry = mf::AtomRegistry::from_values(std::vector<double>{0.1, 1.0 / 3.0, -2.5e-7});
  s.components = {{dense({2, 1, 0}), 1.0 / 3.0}, {dense({0, 0, 1}), 2.0 / 3.0}};
  s.s = 0.1 + 0.2;
  const auto text = mf::to_json_text(mf::state_to_json(s));
  const auto back = mf::parse_dw_state(text);
  EXPECT_EQ(back.registry, s.registry);
  EXPECT_EQ(back.components, s.components);
  EXPECT_EQ(back.s, s.s);
  EXPECT_EQ(mf::to_json_text(mf::state_to_json(back)), text);

  const mf::FvFilterState& fv = s;
  const auto fv_text = mf::to_json_text(mf::state_to_json(fv));
  EXPECT_EQ(mf::to_json_text(mf::state_to_json(mf::parse_fv_state(fv_text))), fv_text);
}

TEST(Invariants, DetectViolations) {
  auto s = single_component({2, 1}, {0.2, 0.4});
  EXPECT_NO_THROW(mf::check_invariants(s));
  s.components = {{dense({2, 1}), 0.5}};
  EXPECT_THROW(mf::check_invariants(s), mf::PreconditionError);
  s.components = {{dense({2, 1, 1}), 1.0}};
  EXPECT_THROW(mf::check_invariants(s), mf::PreconditionError);
}
