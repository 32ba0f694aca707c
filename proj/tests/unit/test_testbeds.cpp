#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "oracles.hpp"
#include "seqdesign/testbeds.hpp"
#include "support.hpp"

using namespace seqdesign;
using seqdesign::testing::vec;

TEST(Banana, FormulaValues) {
  EXPECT_EQ(testbeds::banana(vec({0.0, 0.0})), vec({0.0, 0.0}));
  EXPECT_LE((testbeds::banana(vec({10.0, 0.0})) - vec({10.0, 3.0})).norm(), 1e-12);
  EXPECT_LE((testbeds::banana(vec({-10.0, 2.0})) - vec({-10.0, 5.0})).norm(), 1e-12);
  EXPECT_THROW(testbeds::banana(vec({1.0})), ConfigError);
}

TEST(Bimodal, FormulaValues) {
  EXPECT_EQ(testbeds::bimodal(vec({0.0, 0.0})), vec({0.0, 0.0}));
  EXPECT_EQ(testbeds::bimodal(vec({2.0, 4.0})), vec({0.0, 2.0}));
  EXPECT_EQ(testbeds::bimodal(vec({-1.0, 1.0})), vec({0.0, 2.0}));
}

TEST(Testbeds, BoxesAndNames) {
  const auto b = testbeds::make_testbed("banana");
  EXPECT_EQ(b.box.lower(), vec({-20.0, -10.0}));
  EXPECT_EQ(b.box.upper(), vec({20.0, 10.0}));
  const auto m = testbeds::make_testbed("bimodal");
  EXPECT_EQ(m.box.lower(), vec({-6.0, -4.0}));
  EXPECT_EQ(m.box.upper(), vec({6.0, 8.0}));
  const auto n = testbeds::make_testbed("neutron");
  EXPECT_EQ(n.box.lower(), vec({0.7, 0.01, 1e5, 0.1}));
  EXPECT_EQ(n.box.upper(), vec({0.9, 0.1, 2e5, 0.9}));
  EXPECT_EQ(n.output_dim, 3);
  EXPECT_THROW(testbeds::make_testbed("rosenbrock"), ConfigError);
  EXPECT_EQ(testbeds::testbed_names().size(), 3u);
}

TEST(PointModel, SourceFreeFractionCollapsesBrackets) {
  const testbeds::NuclearData nd = oracles::frozen_nuclear_data();
  for (const auto& x : {vec({0.8, 0.05, 1.5e5, 0.0}), vec({0.72, 0.09, 1.1e5, 0.0})}) {
    const auto p = testbeds::PointModelParams::from_vector(x);
    const double rho = p.rho();
    const Vector v = testbeds::point_model(p, nd);
    const double y = p.eps_F * nd.D2 / (rho * rho);
    EXPECT_NEAR(v[0], -p.eps_F * p.S / (rho * nd.nu_bar), 1e-12 * std::abs(v[0]));
    EXPECT_NEAR(v[1], y, 1e-12 * y);
    const double xinf = 3 * y * y - p.eps_F * p.eps_F * nd.D3 / (rho * rho * rho);
    EXPECT_NEAR(v[2], xinf, 1e-12 * std::abs(xinf));
  }
}

TEST(PointModel, RateIsLinearInSource) {
  const testbeds::NuclearData nd;
  testbeds::PointModelParams p;
  const Vector a = testbeds::point_model(p, nd);
  p.S *= 2;
  const Vector b = testbeds::point_model(p, nd);
  EXPECT_NEAR(b[0], 2 * a[0], 1e-12 * std::abs(a[0]));
  EXPECT_EQ(b[1], a[1]);
  EXPECT_EQ(b[2], a[2]);
}

TEST(PointModel, MatchesSymbolicValues) {
  const testbeds::NuclearData nd = oracles::frozen_nuclear_data();
  for (const auto& f : oracles::frozen_point_model_values()) {
    const Vector v = testbeds::point_model(f.params, nd);
    for (Eigen::Index k = 0; k < 3; ++k) {
      EXPECT_NEAR(v[k], f.value[k], 1e-12 * std::abs(f.value[k]));
    }
  }
}

TEST(PointModel, MatchesExpandedPolynomial) {
  const testbeds::NuclearData nd;
  const auto model = testbeds::make_point_model(nd);
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto p = testbeds::PointModelParams::from_vector(model.box.sample_uniform(rng));
    const Vector a = testbeds::point_model(p, nd), b = oracles::point_model_expanded(p, nd);
    EXPECT_LE(((a - b).array() / b.array().abs()).abs().maxCoeff(), 1e-12);
    EXPECT_GT(a[0], 0.0);
    EXPECT_GT(a[1], 0.0);
  }
}

TEST(PointModel, RejectsSupercriticalAndBadData) {
  testbeds::PointModelParams p;
  p.k_p = 1.0;
  EXPECT_THROW(testbeds::point_model(p, {}), ConfigError);
  testbeds::NuclearData nd;
  nd.D2 = -1;
  EXPECT_THROW(nd.validate(), ConfigError);
}

TEST(Observations, VanishingNoiseRepeatsModelValue) {
  const auto model = testbeds::make_banana();
  const Vector x = vec({3.0, -1.0});
  const auto obs = testbeds::make_observations(model, x, 1e-30 * Matrix::Identity(2, 2), 5, 1);
  for (Eigen::Index k = 0; k < 5; ++k) EXPECT_LE((obs.y.row(k).transpose() - model.eval(x)).norm(), 1e-12);
}

TEST(Observations, SingleDrawIsItsOwnMean) {
  const auto obs = testbeds::make_observations(vec({1.0, 2.0}), Matrix::Identity(2, 2), 1, 9);
  EXPECT_EQ(obs.y_bar, Vector(obs.y.row(0).transpose()));
}

TEST(Observations, EmpiricalCovarianceMatchesNoise) {
  Matrix c(2, 2);
  c << 100.0, 3.0, 3.0, 1.0;
  const auto obs = testbeds::make_observations(vec({0.0, 3.0}), c, 100000, 17);
  const Matrix centered = obs.y.rowwise() - obs.y_bar.transpose();
  const Matrix emp = centered.transpose() * centered / (100000.0 - 1);
  EXPECT_LE((emp - c).norm() / c.norm(), 0.02);
}

TEST(Observations, SeededAndValidated) {
  const auto a = testbeds::make_observations(vec({0.0}), Matrix::Identity(1, 1), 10, 5);
  const auto b = testbeds::make_observations(vec({0.0}), Matrix::Identity(1, 1), 10, 5);
  EXPECT_EQ(a.y, b.y);
  EXPECT_THROW(testbeds::make_observations(vec({0.0, 0.0}), -Matrix::Identity(2, 2), 3, 1), ConfigError);
  EXPECT_THROW(testbeds::make_observations(testbeds::make_banana(), vec({50.0, 0.0}), Matrix::Identity(2, 2), 3, 1),
               ConfigError);
}

TEST(Observations, DefaultSetups) {
  const auto b = testbeds::default_observation_setup(testbeds::make_banana());
  EXPECT_EQ(b.center, vec({0.0, 3.0}));
  EXPECT_EQ(b.n, 5);
  EXPECT_DOUBLE_EQ(b.c_obs(0, 0), 100.0);
  EXPECT_DOUBLE_EQ(b.c_obs(1, 1), 1.0);
  const auto m = testbeds::default_observation_setup(testbeds::make_bimodal());
  EXPECT_EQ(m.center, vec({0.0, 2.0}));
  EXPECT_EQ(m.n, 10);
  EXPECT_DOUBLE_EQ(m.c_obs(0, 0), 5 / std::sqrt(0.2));
  EXPECT_DOUBLE_EQ(m.c_obs(1, 1), 5 / std::sqrt(0.75));
  EXPECT_EQ(testbeds::default_observation_setup(testbeds::make_point_model()).n, 20);
}

TEST(InitialDesign, TwoPointsOccupyBothHalves) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Matrix x = testbeds::initial_design(seqdesign::testing::unit_box(3), 2, s);
    for (Eigen::Index j = 0; j < 3; ++j) {
      EXPECT_NE(x(0, j) < 0.5, x(1, j) < 0.5);
    }
  }
}

TEST(InitialDesign, LatinHypercubeStrata) {
  const auto model = testbeds::make_point_model();
  const Matrix x = testbeds::initial_design(model.box, 10, 4);
  for (Eigen::Index j = 0; j < 4; ++j) {
    std::set<int> strata;
    for (Eigen::Index i = 0; i < 10; ++i) {
      const double u = (x(i, j) - model.box.lower()[j]) / model.box.width()[j];
      strata.insert(std::min(9, static_cast<int>(u * 10)));
    }
    EXPECT_EQ(strata.size(), 10u);
  }
  double dmin = 1e300;
  for (Eigen::Index i = 0; i < 10; ++i) {
    for (Eigen::Index k = i + 1; k < 10; ++k) dmin = std::min(dmin, (x.row(i) - x.row(k)).norm());
  }
  EXPECT_GT(dmin, 0.0);
  EXPECT_THROW(testbeds::initial_design(model.box, 1, 0), ConfigError);
}
