#pragma once

// Bayesian inverse problem on top of a GP surrogate, with a uniform prior on
// a box. Likelihoods fold the surrogate variance into the noise through the
// effective covariance C_eff(x) = C_n(x) + C_obs / N. The normalization
// constant of the posterior is never computed.

#include <memory>
#include <string>

#include "seqdesign/common.hpp"
#include "seqdesign/gp.hpp"
#include "seqdesign/optim.hpp"

namespace seqdesign::inverse {

struct ObservationSet {
  Matrix y;      // N x d, one observation per row
  Matrix c_obs;  // d x d, SPD
  Vector y_bar;  // column mean of y

  /// Validates shapes and positive definiteness of c_obs and caches y_bar.
  static ObservationSet make(Matrix y, Matrix c_obs);

  [[nodiscard]] Eigen::Index count() const { return y.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return y.cols(); }
};

class InverseProblem {
 public:
  InverseProblem(ObservationSet obs, std::shared_ptr<const gp::TrainedGP> surrogate, Box prior_box);

  [[nodiscard]] const ObservationSet& observations() const { return obs_; }
  [[nodiscard]] const gp::TrainedGP& surrogate() const { return *gp_; }
  [[nodiscard]] std::shared_ptr<const gp::TrainedGP> surrogate_ptr() const { return gp_; }
  [[nodiscard]] const Box& box() const { return box_; }

  [[nodiscard]] Matrix effective_cov(const Vector& x) const;
  /// -1/2 log|C_eff(x)| - 1/2 (y_bar - m_n(x))^T C_eff(x)^{-1} (y_bar - m_n(x)).
  [[nodiscard]] double log_likelihood(const Vector& x) const;
  /// Exact N*d-dimensional Gaussian log-density of the stacked observations,
  /// covariance C_n(x) (x) U_N + C_obs (x) I_N with output-major stacking.
  /// Verification only: refuses N*d > 200.
  [[nodiscard]] double log_likelihood_full(const Vector& x) const;
  [[nodiscard]] double log_prior(const Vector& x) const;
  /// log_likelihood + log_prior; -inf outside the box.
  [[nodiscard]] double log_posterior(const Vector& x) const;

  /// Same observations and prior with another surrogate.
  [[nodiscard]] InverseProblem with_surrogate(std::shared_ptr<const gp::TrainedGP> surrogate) const;

 private:
  ObservationSet obs_;
  std::shared_ptr<const gp::TrainedGP> gp_;
  Box box_;
  Matrix c_obs_over_n_;
};

struct MapEstimate {
  Vector x;
  double log_posterior = 0.0;
  int evals = 0;
};

/// Global maximization of the log-posterior with the annealing optimizer.
/// Requires a budget of at least 100 evaluations.
MapEstimate find_map(const InverseProblem& ip, const optim::AnnealConfig& cfg);

struct ObservationFile {
  ObservationSet obs;
  Box box;
};

/// Reads `y1..yd` rows from a CSV file plus a JSON sidecar holding
/// {"c_obs": [[...]], "box": {"lower": [...], "upper": [...]}}.
ObservationFile load_observations(const std::string& csv_path, const std::string& sidecar_path);
void save_observations(const ObservationSet& obs, const Box& box, const std::string& csv_path,
                       const std::string& sidecar_path);

}  // namespace seqdesign::inverse
