#pragma once

// Reference computations used to check the library. Everything here is
// deliberately naive: explicit inverses, dense determinants, grids and
// brute-force Monte Carlo. The reference sides never call the library's GP
// algebra; the comparison drivers at the bottom run both sides.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "seqdesign/gp.hpp"
#include "seqdesign/testbeds.hpp"

namespace seqdesign::oracles {

/// Kernel block evaluated from scratch (no nugget).
Matrix kernel_block(const gp::KernelSpec& spec, const Vector& x, const Vector& x2);

/// Dense Gram matrix in original units: D K_norm D with D = diag(scale), point-major,
/// nugget (scaled) on the diagonal of every training point whose flag is set.
Matrix dense_gram(const gp::KernelSpec& spec, const Matrix& inputs, const Vector& scale,
                  const std::vector<bool>& noisy);

struct DensePosterior {
  Vector mean;
  Matrix cov;
};

/// Posterior mean and covariance at x from an explicit inverse of the Gram matrix.
DensePosterior direct_predict(const gp::KernelSpec& spec, const Matrix& inputs, const Matrix& outputs,
                              const gp::OutputScaling& scaling, const Vector& x);
/// Posterior cross-covariance C_n(xs, x) from an explicit inverse.
Matrix direct_cross(const gp::KernelSpec& spec, const Matrix& inputs, const gp::OutputScaling& scaling,
                    const Vector& xs, const Vector& x);
/// Covariance at xs after batch conditioning on inputs plus a noise-free point x.
Matrix reconditioned_cov(const gp::KernelSpec& spec, const Matrix& inputs, const gp::OutputScaling& scaling,
                         const Vector& xs, const Vector& x);
/// Log-marginal likelihood in original units from a dense LU determinant.
double dense_lml(const gp::KernelSpec& spec, const Matrix& inputs, const Matrix& outputs,
                 const gp::OutputScaling& scaling);

/// Gaussian log-density of the stacked observations (output-major: index a*N + k)
/// with mean repeated N times and covariance cn (x) ones(N,N) + c_obs (x) I_N.
double kronecker_loglik(const Matrix& y, const Vector& mean, const Matrix& cn, const Matrix& c_obs);

/// Brute-force check of the closed-form IP-SUR criterion on a 1D, single-output
/// toy problem. For every probe x it draws z ~ N(m_n(x), C_n(x)), re-conditions
/// the GP on (x, z), integrates |C_{n+1}| L_{n+1} p on a grid by the trapezoid
/// rule and divides by Z_n computed the same way.
struct ToyProblem {
  gp::KernelSpec spec;        // p = 1, d = 1
  Matrix inputs;              // n x 1
  Matrix outputs;             // n x 1
  gp::OutputScaling scaling;  // shared with the library-side GP
  Matrix y;                   // N x 1 observations
  Matrix c_obs;               // 1 x 1
  double lo = 0.0;
  double hi = 1.0;
};

struct ToyEstimate {
  Vector value;  // E_z[D_{n+1}(x, z)] / Z_n per probe
  Vector se;     // Monte Carlo standard error per probe
};

ToyEstimate toy_bruteforce(const ToyProblem& toy, const Vector& probes, int n_draws, int grid_points,
                               std::uint64_t seed);
/// Z_n-normalized posterior density of the toy on a uniform grid (trapezoid normalization).
std::vector<double> toy_posterior_grid(const ToyProblem& toy, int grid_points);

/// Trapezoid rule on m equally spaced points.
double trapezoid(const std::function<double(double)>& f, double a, double b, int m);

struct GridOptimum {
  Vector x;
  double value = 0.0;
  Vector cell;  // grid spacing per coordinate
};
/// Exhaustive argmax over a tensor grid with m points per coordinate (first-seen ties).
GridOptimum grid_argmax(const std::function<double(const Vector&)>& f, const Box& box, int m);

/// Point model rewritten as a polynomial in 1/rho (expanded brackets).
Vector point_model_expanded(const testbeds::PointModelParams& p, const testbeds::NuclearData& nd);

/// Exact rational evaluations of the point model, computed once with a computer-algebra system.
struct FrozenPointModel {
  testbeds::PointModelParams params;
  Vector value;  // (R, Y_inf, X_inf)
};
testbeds::NuclearData frozen_nuclear_data();
std::vector<FrozenPointModel> frozen_point_model_values();

/// Random well-conditioned multi-output GP instance for property checks.
struct RandomInstance {
  gp::KernelSpec spec;
  Matrix inputs;   // n x p in [0,1]^p
  Matrix outputs;  // n x d
};
RandomInstance random_instance(Rng& rng, Eigen::Index p, Eigen::Index d, Eigen::Index n, double nugget = 1e-4);

/// The 1D toy used for the closed-form criterion check: p = 1, d = 1, n = 4, N = 2 on [0, 1].
ToyProblem standard_toy();

struct CriterionComparison {
  Vector probes;
  Vector library;     // chain-average criterion
  Vector library_se;  // batch-means standard error
  Vector oracle;      // brute force E_z[D_{n+1}] / Z_n
  Vector oracle_se;
  /// |library - oracle| / sqrt(library_se^2 + oracle_se^2)
  [[nodiscard]] Vector z_scores() const;
};
/// Runs both sides on the standard toy at 10 evenly spaced probes.
CriterionComparison criterion_comparison(std::uint64_t seed, int n_draws = 10000, int grid_points = 2000,
                                 int chain_length = 200000);

/// tau = (1 + phi) / (1 - phi) for an AR(1) process.
inline double ar1_iat(double phi) { return (1.0 + phi) / (1.0 - phi); }

/// Runs a named suite of oracle comparisons ("gp", "inverse", "design",
/// "testbeds", "criterion" or "all"), printing one line per check.
/// Returns the number of failed checks; throws ConfigError for an unknown suite.
int run_battery(const std::string& suite, std::ostream& out);
std::vector<std::string> battery_suites();

}  // namespace seqdesign::oracles
