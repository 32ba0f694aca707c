#pragma once

// Adaptive Metropolis sampling (Haario-style) of a log-density restricted to
// a box, plus integrated-autocorrelation-time diagnostics.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "seqdesign/common.hpp"

namespace seqdesign::mcmc {

using LogDensity = std::function<double(const Vector&)>;

struct AdaptiveMetropolisConfig {
  int length = 20000;            // total iterations, burn-in included
  double burn_in_fraction = 0.2;
  int adapt_start = 200;         // draws before the proposal starts adapting
  double epsilon = 1e-6;         // regularization, in unit-box coordinates
  double initial_scale = 0.05;   // initial proposal sd as a fraction of the box width
  std::uint64_t seed = 0;
};

struct PosteriorChain {
  Matrix samples;          // retained draws, one per row (burn-in removed)
  Vector log_densities;    // log-density of every retained draw
  double acceptance_rate = 0.0;
  int burn_in = 0;         // number of discarded leading iterations

  [[nodiscard]] Eigen::Index size() const { return samples.rows(); }
  [[nodiscard]] Eigen::Index dim() const { return samples.cols(); }
  /// Rows i*size/m for i < m (all rows when m >= size).
  [[nodiscard]] PosteriorChain strided(Eigen::Index m) const;
};

class StuckChainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Proposal covariance s_p * (Cov(history) + eps I) with s_p = 2.38^2 / p,
/// computed in unit-box coordinates; out-of-box proposals are rejected
/// without evaluating the density.
PosteriorChain adaptive_metropolis(const LogDensity& logpdf, const Box& box, const Vector& init,
                                   const AdaptiveMetropolisConfig& cfg);

struct IatEstimate {
  Vector tau;                 // per coordinate; NaN when undefined
  std::vector<bool> defined;  // false for constant coordinates
};

/// Geyer initial-positive-sequence estimate of tau = 1 + 2 sum_k rho_k, floored at 1.
IatEstimate estimate_iat(const Matrix& samples);
inline IatEstimate estimate_iat(const PosteriorChain& chain) { return estimate_iat(chain.samples); }

/// CSV with columns x1..xp,logpdf.
void save_chain_csv(const PosteriorChain& chain, const std::string& path);
PosteriorChain load_chain_csv(const std::string& path);

}  // namespace seqdesign::mcmc
