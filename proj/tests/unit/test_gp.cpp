#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "support.hpp"

using namespace seqdesign;
using seqdesign::testing::rbf_spec;
using seqdesign::testing::vec;

namespace {

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

gp::TrainedGP single_point_gp(double nugget = 0.0) {
  Matrix x(1, 1), z(1, 1);
  x << 0.0;
  z << 1.0;
  return gp::condition(rbf_spec(1, 1, 0.3, 1.0, nugget), x, z);
}

}  // namespace

TEST(GpPredict, EmptyTrainingSetReturnsPrior) {
  const auto spec = rbf_spec(2, 2, 0.4, 2.5);
  const gp::TrainedGP g = gp::condition(spec, Matrix(0, 2), Matrix(0, 2));
  const Vector x = vec({0.3, 0.7});
  const auto p = g.predict(x);
  EXPECT_NEAR(max_abs(p.mean), 0.0, 0.0);
  EXPECT_LE(max_abs(p.cov - spec.eval(x, x)), 1e-14);
  EXPECT_DOUBLE_EQ(g.log_marginal_likelihood(), 0.0);
}

TEST(GpPredict, InterpolatesSingleDatum) {
  const gp::TrainedGP g = single_point_gp();
  const auto p = g.predict(vec({0.0}));
  EXPECT_NEAR(p.mean[0], 1.0, 1e-12);
  EXPECT_NEAR(p.cov(0, 0), 0.0, 1e-12);
}

TEST(GpPredict, InterpolatesTrainingPoints) {
  Rng rng(3);
  const auto inst = oracles::random_instance(rng, 2, 2, 6, 0.0);
  const gp::TrainedGP g = gp::condition(inst.spec, inst.inputs, inst.outputs);
  for (Eigen::Index i = 0; i < inst.inputs.rows(); ++i) {
    const Vector xi = inst.inputs.row(i).transpose();
    const auto p = g.predict(xi);
    EXPECT_LE(max_abs(p.mean - inst.outputs.row(i).transpose()), 1e-6);
    EXPECT_LE(max_abs(p.cov), 1e-6 * max_abs(g.denormalize_cov(g.prior_block(xi, xi))));
  }
}

TEST(GpPredict, RevertsToPriorFarFromData) {
  Rng rng(5);
  const auto inst = oracles::random_instance(rng, 2, 3, 8, 0.0);
  const gp::TrainedGP g = gp::condition(inst.spec, inst.inputs, inst.outputs);
  double max_ell = 0.0;
  for (const auto& lk : inst.spec.latent) max_ell = std::max(max_ell, lk.lengthscales.maxCoeff());
  const Vector far = Vector::Constant(2, 1.0 + 30.0 * max_ell);
  const Matrix prior = g.denormalize_cov(g.prior_block(far, far));
  const auto p = g.predict(far);
  EXPECT_LE(max_abs(p.cov - prior) / max_abs(prior), 1e-6);
  EXPECT_LE(max_abs(p.mean - g.mean_const()), 1e-6 * std::max(1.0, max_abs(g.mean_const())));
}

TEST(GpPredict, MatchesDirectInverseOracle) {
  Rng rng(11);
  for (int t = 0; t < 10; ++t) {
    const auto d = static_cast<Eigen::Index>(1 + t % 3);
    const auto inst = oracles::random_instance(rng, 3, d, 5);
    const gp::TrainedGP g = gp::condition(inst.spec, inst.inputs, inst.outputs);
    const Vector x = Vector::Constant(3, 0.1 * t);
    const auto ref = oracles::direct_predict(inst.spec, inst.inputs, inst.outputs, g.scaling(), x);
    const auto got = g.predict(x);
    EXPECT_LE(max_abs(got.mean - ref.mean), 1e-8 * std::max(1.0, max_abs(ref.mean)));
    EXPECT_LE(max_abs(got.cov - ref.cov), 1e-8 * std::max(1.0, max_abs(ref.cov)));
  }
}

TEST(GpPredict, TwoPointTwoOutputLmcMatchesOracle) {
  gp::KernelSpec spec;
  spec.latent = {{gp::KernelFamily::rbf, vec({0.5}), 1.3}, {gp::KernelFamily::matern32, vec({0.2}), 0.7}};
  spec.mixing.resize(2, 2);
  spec.mixing << 1.0, 0.4, -0.3, 0.9;
  spec.nugget = vec({1e-4, 2e-4});
  Matrix x(2, 1), z(2, 2);
  x << 0.2, 0.6;
  z << 1.0, -0.5, 0.3, 0.8;
  const gp::TrainedGP g = gp::condition(spec, x, z);
  const auto ref = oracles::direct_predict(spec, x, z, g.scaling(), vec({0.45}));
  const auto got = g.predict(vec({0.45}));
  EXPECT_LE(max_abs(got.mean - ref.mean), 1e-10);
  EXPECT_LE(max_abs(got.cov - ref.cov), 1e-10);
}

TEST(GpPredict, CovarianceIsSymmetricPsd) {
  Rng rng(17);
  const auto inst = oracles::random_instance(rng, 2, 3, 10);
  const gp::TrainedGP g = gp::condition(inst.spec, inst.inputs, inst.outputs);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 50; ++t) {
    const auto p = g.predict(vec({u(rng), u(rng)}));
    EXPECT_LE(max_abs(p.cov - p.cov.transpose()), 1e-14);
    EXPECT_GE(min_eigenvalue(p.cov), -1e-10);
  }
}

TEST(GpCrossCov, DiagonalConsistencyAndSymmetry) {
  Rng rng(19);
  const auto inst = oracles::random_instance(rng, 2, 2, 7);
  const gp::TrainedGP g = gp::condition(inst.spec, inst.inputs, inst.outputs);
  const Vector x = vec({0.3, 0.4}), xs = vec({0.8, 0.1});
  EXPECT_LE(max_abs(g.cross_cov(x, x) - g.predict(x).cov), 1e-10);
  EXPECT_LE(max_abs(g.cross_cov(xs, x) - g.cross_cov(x, xs).transpose()), 1e-12);
  EXPECT_LE(max_abs(g.cross_cov(xs, x) - oracles::direct_cross(inst.spec, inst.inputs, g.scaling(), xs, x)), 1e-8);
}

TEST(GpCrossCov, VanishesAtNoiseFreeTrainingPoint) {
  Rng rng(23);
  const auto inst = oracles::random_instance(rng, 2, 2, 5, 0.0);
  const gp::TrainedGP g = gp::condition(inst.spec, inst.inputs, inst.outputs);
  EXPECT_LE(max_abs(g.cross_cov(inst.inputs.row(2).transpose(), vec({0.5, 0.5}))), 1e-8);
}

TEST(GpUpdatedCov, SelfConditioningAnnihilates) {
  Rng rng(29);
  const auto inst = oracles::random_instance(rng, 2, 2, 6);
  const gp::TrainedGP g = gp::condition(inst.spec, inst.inputs, inst.outputs);
  const Vector x = vec({0.45, 0.55});
  EXPECT_LE(max_abs(g.updated_cov(x, x)), 1e-8 * max_abs(g.predict(x).cov) + 1e-14);
}

TEST(GpUpdatedCov, IndependenceLimit) {
  const gp::TrainedGP g = single_point_gp(1e-6);
  const Vector xs = vec({0.5});
  const Vector far = vec({0.5 + 20 * 0.3 * 2});
  EXPECT_LE(max_abs(g.updated_cov(xs, far) - g.predict(xs).cov), 1e-8);
}

TEST(GpUpdatedCov, MatchesReconditioningWithAnyValue) {
  Rng rng(31);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 50; ++t) {
    const auto p = static_cast<Eigen::Index>(1 + t % 4);
    const auto d = static_cast<Eigen::Index>(1 + t % 3);
    const auto n = static_cast<Eigen::Index>(2 + t % 11);
    const auto inst = oracles::random_instance(rng, p, d, n, 0.0);
    const gp::TrainedGP g = gp::condition(inst.spec, inst.inputs, inst.outputs);
    Vector x(p), xs(p);
    for (Eigen::Index k = 0; k < p; ++k) {
      x[k] = u(rng);
      xs[k] = u(rng);
    }
    const Vector z = Vector::Constant(d, 10.0 * u(rng) - 5.0);
    const Matrix batch = g.with_point(x, z).predict(xs).cov;
    EXPECT_LE(max_abs(g.updated_cov(xs, x) - batch), 1e-7) << "instance " << t;
  }
}

TEST(GpUpdatedCov, DeterminantNeverIncreases) {
  Rng rng(37);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 200; ++t) {
    const auto p = static_cast<Eigen::Index>(1 + t % 3);
    const auto d = static_cast<Eigen::Index>(1 + t % 3);
    const auto inst = oracles::random_instance(rng, p, d, 3 + t % 6);
    const gp::TrainedGP g = gp::condition(inst.spec, inst.inputs, inst.outputs);
    Vector x(p), xs(p);
    for (Eigen::Index k = 0; k < p; ++k) {
      x[k] = u(rng);
      xs[k] = u(rng);
    }
    EXPECT_LE(psd_determinant(g.updated_cov(xs, x)), psd_determinant(g.predict(xs).cov) + 1e-12);
  }
}

TEST(GpUpdatedCov, ExhaustedQueryIsReported) {
  const gp::TrainedGP g = single_point_gp();
  EXPECT_THROW((void)g.updated_cov(vec({0.4}), vec({0.0})), gp::ExhaustedPointError);
}

TEST(GpLml, StandardNormalAtZero) {
  Matrix x(1, 1), z(1, 1);
  x << 0.5;
  z << 0.0;
  const gp::TrainedGP g = gp::condition(rbf_spec(1, 1, 1.0), x, z, gp::OutputScaling::identity(1));
  EXPECT_NEAR(g.log_marginal_likelihood(), -0.5 * std::log(2 * std::numbers::pi), 1e-12);
}

TEST(GpLml, ScalarClosedForm) {
  const double s2 = 2.7, a = 1.3;
  Matrix x(1, 1), z(1, 1);
  x << 0.5;
  z << a;
  const gp::TrainedGP g = gp::condition(rbf_spec(1, 1, 1.0, s2), x, z, gp::OutputScaling::identity(1));
  EXPECT_NEAR(g.log_marginal_likelihood(),
              -0.5 * std::log(2 * std::numbers::pi) - 0.5 * std::log(s2) - a * a / (2 * s2), 1e-12);
}

TEST(GpLml, MatchesDenseDeterminantOracle) {
  Rng rng(41);
  for (int t = 0; t < 5; ++t) {
    const auto inst = oracles::random_instance(rng, 2, 2, 3);
    const gp::TrainedGP g = gp::condition(inst.spec, inst.inputs, inst.outputs);
    const double ref = oracles::dense_lml(inst.spec, inst.inputs, inst.outputs, g.scaling());
    EXPECT_NEAR(g.log_marginal_likelihood(), ref, 1e-8 * std::max(1.0, std::abs(ref)));
  }
}

TEST(GpLml, AnalyticGradientMatchesFiniteDifferences) {
  Rng rng(43);
  for (int t = 0; t < 6; ++t) {
    const auto p = static_cast<Eigen::Index>(1 + t % 3);
    const auto d = static_cast<Eigen::Index>(1 + t % 2);
    const auto inst = oracles::random_instance(rng, p, d, 8);
    gp::HyperBounds b = gp::HyperBounds::for_box(Box(Vector::Zero(p), Vector::Ones(p)));
    const gp::Parameterization param(inst.spec, b);
    const auto scaling = gp::OutputScaling::from_data(inst.outputs);
    const Vector theta = param.pack(inst.spec);
    const auto an = gp::lml_with_gradient(param, theta, inst.inputs, scaling.normalize(inst.outputs), true);
    const auto fd = gp::lml_with_gradient(param, theta, inst.inputs, scaling.normalize(inst.outputs), false, 1e-5);
    ASSERT_TRUE(an.ok && fd.ok);
    EXPECT_NEAR(an.value, fd.value, 1e-12 * std::max(1.0, std::abs(an.value)));
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      EXPECT_LE(std::abs(an.gradient[i] - fd.gradient[i]), 1e-4 * std::max(1.0, std::abs(fd.gradient[i])))
          << param.name(i);
    }
  }
}

TEST(GpCondition, DuplicateInputsNameThePair) {
  Matrix x(3, 1), z(3, 1);
  x << 0.1, 0.5, 0.5;
  z << 0.0, 1.0, 1.1;
  gp::ConditionOptions opts;
  opts.allow_jitter = false;
  try {
    (void)gp::condition(rbf_spec(1, 1, 0.3), x, z, gp::OutputScaling::from_data(z), opts);
    FAIL() << "expected a factorization failure";
  } catch (const gp::FactorizationError& e) {
    EXPECT_EQ(std::min(e.first(), e.second()), 1);
    EXPECT_EQ(std::max(e.first(), e.second()), 2);
  }
}

TEST(GpCondition, JitterRepairsNearDuplicates) {
  Matrix x(3, 1), z(3, 1);
  x << 0.1, 0.5, 0.5 + 1e-9;
  z << 0.0, 1.0, 1.0;
  const gp::TrainedGP g = gp::condition(rbf_spec(1, 1, 0.3), x, z);
  EXPECT_GT(g.jitter(), 0.0);
  EXPECT_TRUE(g.predict(vec({0.3})).mean.allFinite());
}

TEST(GpCondition, RejectsShapeMismatch) {
  EXPECT_THROW((void)gp::condition(rbf_spec(2, 1, 0.3), Matrix::Zero(3, 2), Matrix::Zero(2, 1)), ConfigError);
  EXPECT_THROW((void)gp::condition(rbf_spec(2, 1, 0.3), Matrix::Zero(3, 1), Matrix::Zero(3, 1)), ConfigError);
}

TEST(GpFit, RecoversLengthscaleOfSyntheticDraw) {
  Rng rng(47);
  const int n = 40;
  Matrix x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = 5.0 * (i + 0.5) / n;
  const auto truth = rbf_spec(1, 1, 0.5);
  Matrix k = gp::gram_matrix(truth, x);
  k.diagonal().array() += 1e-8;
  const Eigen::LLT<Matrix> llt(k);
  std::normal_distribution<double> g(0, 1);
  Vector e(n);
  for (int i = 0; i < n; ++i) e[i] = g(rng);
  const Vector ze = llt.matrixL() * e;
  const Matrix z = ze;
  gp::FitOptions fo;
  fo.restarts = 4;
  fo.seed = 1;
  const auto fit = gp::fit_hyperparameters(rbf_spec(1, 1, 2.0, 1.0, 1e-4), x, z,
                                           gp::HyperBounds::for_box(Box(vec({0.0}), vec({5.0}))), fo);
  const double ell = fit.spec.latent[0].lengthscales[0];
  EXPECT_GE(ell, 0.3);
  EXPECT_LE(ell, 0.8);
  EXPECT_GE(fit.lml, fit.initial_lml);
}

TEST(GpFit, NoRestartsNeverWorsens) {
  Rng rng(53);
  const auto inst = oracles::random_instance(rng, 2, 2, 10);
  gp::FitOptions fo;
  fo.restarts = 0;
  const auto fit = gp::fit_hyperparameters(inst.spec, inst.inputs, inst.outputs,
                                           gp::HyperBounds::for_box(seqdesign::testing::unit_box(2)), fo);
  EXPECT_GE(fit.lml, fit.initial_lml - 1e-9);
  EXPECT_NEAR(gp::condition(fit.spec, inst.inputs, inst.outputs).log_marginal_likelihood(), fit.lml, 1e-8);
}

TEST(GpFit, ConstantOutputsDriveVarianceToLowerBound) {
  Matrix x(8, 1), z = Matrix::Constant(8, 1, 4.2);
  for (int i = 0; i < 8; ++i) x(i, 0) = i / 7.0;
  const auto bounds = gp::HyperBounds::for_box(seqdesign::testing::unit_box(1));
  gp::FitOptions fo;
  const auto fit = gp::fit_hyperparameters(rbf_spec(1, 1, 0.3, 1.0, 1e-4), x, z, bounds, fo);
  EXPECT_LE(fit.spec.latent[0].variance, bounds.variance_lo * 1.01);
}

TEST(GpIo, JsonRoundTripPreservesPredictions) {
  Rng rng(59);
  const auto inst = oracles::random_instance(rng, 3, 2, 9);
  const gp::TrainedGP g = gp::condition(inst.spec, inst.inputs, inst.outputs);
  const std::string path = seqdesign::testing::scratch_dir("gpio") + "/gp.json";
  gp::save_gp(g, path);
  const gp::TrainedGP h = gp::load_gp(path);
  const Vector x = vec({0.2, 0.9, 0.4});
  EXPECT_EQ(g.predict(x).mean, h.predict(x).mean);
  EXPECT_EQ(g.predict(x).cov, h.predict(x).cov);
  EXPECT_DOUBLE_EQ(g.log_marginal_likelihood(), h.log_marginal_likelihood());
}

TEST(GpIo, RejectsMalformedDocuments) {
  EXPECT_THROW((void)gp::gp_from_json("{"), ConfigError);
  EXPECT_THROW((void)gp::gp_from_json("{\"format_version\": 99}"), ConfigError);
  EXPECT_THROW((void)gp::load_gp("/nonexistent/gp.json"), ConfigError);
}

TEST(GpKernel, FamiliesAreUnitAtZeroAndDecay) {
  for (auto f : {gp::KernelFamily::rbf, gp::KernelFamily::matern32, gp::KernelFamily::matern52}) {
    EXPECT_DOUBLE_EQ(gp::correlation_r2(f, 0.0), 1.0);
    EXPECT_LT(gp::correlation_r2(f, 4.0), gp::correlation_r2(f, 1.0));
    EXPECT_EQ(gp::parse_kernel_family(gp::to_string(f)), f);
  }
  EXPECT_THROW(gp::parse_kernel_family("cosine"), ConfigError);
}
