#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "seqdesign/gp.hpp"
#include "seqdesign/inverse.hpp"
#include "seqdesign/testbeds.hpp"

namespace seqdesign::testing {

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

inline Box unit_box(Eigen::Index p) { return Box(Vector::Zero(p), Vector::Ones(p)); }

inline gp::KernelSpec rbf_spec(Eigen::Index p, Eigen::Index d, double ell, double variance = 1.0,
                               double nugget = 0.0) {
  return gp::KernelSpec::make_default(gp::KernelFamily::rbf, Vector::Constant(p, ell), d, variance, nugget);
}

/// Surrogate of a test bed trained on an LHS design, with hyperparameters fitted.
inline std::shared_ptr<const gp::TrainedGP> fitted_surrogate(const testbeds::DirectModel& model, int n0,
                                                             std::uint64_t seed) {
  const Matrix x = testbeds::initial_design(model.box, n0, seed);
  const Matrix z = model.eval_rows(x);
  const auto spec0 = gp::KernelSpec::make_default(gp::KernelFamily::matern52, 0.3 * model.box.width(),
                                                  model.output_dim, 1.0, 1e-6);
  gp::FitOptions fo;
  fo.seed = seed;
  const auto fit = gp::fit_hyperparameters(spec0, x, z, gp::HyperBounds::for_box(model.box), fo);
  return std::make_shared<const gp::TrainedGP>(gp::condition(fit.spec, x, z));
}

inline inverse::InverseProblem default_problem(const testbeds::DirectModel& model, int n0, std::uint64_t seed) {
  const auto setup = testbeds::default_observation_setup(model);
  auto obs = testbeds::make_observations(setup.center, setup.c_obs, setup.n, seed + 1000);
  return inverse::InverseProblem(obs, fitted_surrogate(model, n0, seed), model.box);
}

/// Fresh scratch directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("seqdesign_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace seqdesign::testing
