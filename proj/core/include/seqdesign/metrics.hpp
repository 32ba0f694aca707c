#pragma once

// Performance metrics of a sequential design run: the posterior-weighted
// integrated covariance determinant (IVAR), and KDE-based differential
// entropy and Kullback-Leibler divergence of posterior chains.

#include <cstdint>
#include <string>

#include "seqdesign/common.hpp"
#include "seqdesign/gp.hpp"
#include "seqdesign/mcmc.hpp"

namespace seqdesign::metrics {

/// Gaussian-kernel density estimate with Scott's bandwidth
/// H = M^{-1/(p+4)} Sigma^{1/2} (symmetric square root of the sample covariance).
class KdeModel {
 public:
  /// `floor_scale` sets the bandwidth floor 1e-6 * floor_scale used for degenerate samples.
  explicit KdeModel(const Matrix& points, double floor_scale = 1.0);

  [[nodiscard]] double log_density(const Vector& x) const;
  [[nodiscard]] double density(const Vector& x) const { return std::exp(log_density(x)); }
  [[nodiscard]] const Matrix& bandwidth() const { return bandwidth_; }
  /// True when the bandwidth had to be floored (near-constant coordinates).
  [[nodiscard]] bool degenerate() const { return degenerate_; }
  [[nodiscard]] Eigen::Index size() const { return whitened_.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return whitened_.cols(); }

 private:
  Matrix whitened_;      // H^{-1} x_i, rows sorted on the first column
  Matrix inv_bandwidth_;
  Matrix bandwidth_;
  double log_norm_ = 0.0;  // -log M - p/2 log(2 pi) - log|H|
  bool degenerate_ = false;
};

struct KdeOptions {
  /// Evaluation points drawn (evenly strided) from the chain; 0 uses all.
  Eigen::Index max_eval_points = 5000;
  double floor_scale = 1.0;
};

/// Chain average of |C_n(X_l)| in original output units. `max_samples` = 0 uses all draws.
double ivar(const gp::TrainedGP& gp, const mcmc::PosteriorChain& chain, Eigen::Index max_samples = 0);
double ivar(const gp::TrainedGP& gp, const Matrix& samples, Eigen::Index max_samples = 0);

/// -mean log p_kde(X_l) with the KDE built from the same samples.
double entropy_kde(const Matrix& samples, const KdeOptions& options = {});
/// mean over X_l in `samples` of log p_kde(X_l) - log q_kde(X_l) with q built from `reference`.
/// Reported raw: small negative values are KDE bias.
double kl_kde(const Matrix& samples, const Matrix& reference, const KdeOptions& options = {});

struct MetricsRecord {
  int iteration = 0;
  double ivar = 0.0;
  double entropy = 0.0;
  double kl = 0.0;
  double acceptance_rate = 0.0;
  Eigen::Index chain_length = 0;
  bool kde_degenerate = false;
};

/// All three metrics for one iteration. An empty reference chain yields kl = NaN.
MetricsRecord evaluate(int iteration, const gp::TrainedGP& gp, const mcmc::PosteriorChain& chain,
                       const Matrix& reference, const KdeOptions& options = {});

}  // namespace seqdesign::metrics
