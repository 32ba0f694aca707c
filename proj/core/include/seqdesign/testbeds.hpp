#pragma once

// Benchmark direct models and their observation generators.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "seqdesign/common.hpp"
#include "seqdesign/inverse.hpp"

namespace seqdesign::testbeds {

struct DirectModel {
  std::string name;
  Box box;
  Eigen::Index output_dim = 0;
  std::function<Vector(const Vector&)> eval;

  [[nodiscard]] Eigen::Index input_dim() const { return box.dim(); }
  /// Row-wise evaluation.
  [[nodiscard]] Matrix eval_rows(const Matrix& x) const;
};

/// (x1, x2 + 0.03 x1^2) on [-20,20] x [-10,10].
Vector banana(const Vector& x);
/// (x2 - x1^2, x2 - x1) on [-6,6] x [-4,8].
Vector bimodal(const Vector& x);

/// Multiplicity statistics of induced (nu_bar, D2, D3) and spontaneous
/// (nu_bar_s, D2s, D3s) fissions. The defaults are placeholders, not physical data.
struct NuclearData {
  double nu_bar = 2.4;
  double D2 = 0.8;
  double D3 = 0.5;
  double nu_bar_s = 2.1;
  double D2s = 0.9;
  double D3s = 0.7;

  void validate() const;
};

struct PointModelParams {
  double k_p = 0.8;
  double eps_F = 0.05;
  double S = 1.5e5;
  double x_s = 0.5;

  [[nodiscard]] double rho() const { return (k_p - 1.0) / k_p; }
  static PointModelParams from_vector(const Vector& x);
};

/// Neutron-noise point model: (k_p, eps_F, S, x_s) -> (R, Y_inf, X_inf).
/// Throws ConfigError for k_p outside (0, 1).
Vector point_model(const PointModelParams& params, const NuclearData& nd);

DirectModel make_banana();
DirectModel make_bimodal();
DirectModel make_point_model(const NuclearData& nd = {});
/// "banana", "bimodal" or "neutron".
DirectModel make_testbed(const std::string& name, const NuclearData& nd = {});
std::vector<std::string> testbed_names();

/// N i.i.d. draws y_k ~ N(center, c_obs).
inverse::ObservationSet make_observations(const Vector& center, const Matrix& c_obs, int n, std::uint64_t seed);
inverse::ObservationSet make_observations(const DirectModel& model, const Vector& x_th, const Matrix& c_obs, int n,
                                          std::uint64_t seed);

/// Default observation setup of each test bed.
struct ObservationSetup {
  Vector center;  // noiseless mean of the observations
  Matrix c_obs;
  int n = 0;
};
ObservationSetup default_observation_setup(const DirectModel& model);

/// Latin hypercube: one point per stratum per coordinate, uniform inside strata.
Matrix initial_design(const Box& box, int n0, std::uint64_t seed);

}  // namespace seqdesign::testbeds
