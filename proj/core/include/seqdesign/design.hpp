#pragma once

// Sequential design strategies for GP surrogates of inverse problems.
//
//  * IP-SUR: minimize the expected posterior-weighted integrated determinant
//    of the predictive covariance after one more noise-free observation at x,
//        F(x) / Z  ~=  sum_l w_l |C_{n+1}(X_l | x)|,
//    where X_l are draws from the current posterior and w_l = 1/L (beta = 1)
//    or self-normalized tempering weights proportional to L_n(y | X_l)^(beta - 1).
//  * CSQ(h): maximize |C_n(x)| over { x : log p_n(x_MAP | y) - log p_n(x | y) <= h }.
//  * D-optimal: maximize |C_n(x)| over the whole box.
//  * I-optimal: minimize the uniform average of |C_{n+1}(u_j | x)| over a
//    fixed Sobol node set.

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "seqdesign/common.hpp"
#include "seqdesign/gp.hpp"
#include "seqdesign/inverse.hpp"
#include "seqdesign/mcmc.hpp"
#include "seqdesign/optim.hpp"

namespace seqdesign::design {

enum class StrategyKind { csq, ipsur, dopt, iopt };

struct DesignStrategy {
  StrategyKind kind = StrategyKind::ipsur;
  double h = 3.0;                 // CSQ log-posterior gap
  double beta = 1.0;              // IP-SUR tempering
  int m_int = 256;                // I-optimal integration nodes
  Eigen::Index max_chain_samples = 2000;  // IP-SUR nodes, evenly strided from the chain; 0 = all
  optim::AnnealConfig optim;

  void validate() const;
  /// Stable identifier such as "IPSUR", "CSQ(h=3)", "DOPT", "IOPT".
  [[nodiscard]] std::string label() const;

  static DesignStrategy ipsur(double beta = 1.0);
  static DesignStrategy csq(double h);
  static DesignStrategy d_optimal();
  static DesignStrategy i_optimal(int m_int = 256);
};

/// x -> sum_l w_l |C_{n+1}(node_l | x)| in original output units, with every
/// node-dependent quantity precomputed once. The GP must outlive the criterion.
class IntegratedCovarianceCriterion {
 public:
  IntegratedCovarianceCriterion(const gp::TrainedGP& gp, Matrix nodes, Vector weights);

  [[nodiscard]] double operator()(const Vector& x) const;
  /// sum_l w_l |C_n(node_l)|: the value with no new observation.
  [[nodiscard]] double baseline() const { return baseline_; }
  [[nodiscard]] Eigen::Index num_nodes() const { return nodes_.rows(); }
  [[nodiscard]] const Vector& weights() const { return weights_; }

 private:
  const gp::TrainedGP& gp_;
  Matrix nodes_;
  Vector weights_;
  Matrix whitened_;   // (n d) x (m d): L^{-1} K(X, node_l) stacked by node
  Matrix node_cov_;   // d x (m d): normalized C_n(node_l)
  std::vector<Matrix> scaled_nodes_;  // per latent: p x m, nodes divided by lengthscales
  std::vector<double> node_det_;
  double baseline_ = 0.0;

  template <int D>
  double node_sum(const Vector& x, const Matrix& g, const Matrix& cx_inv) const;
};

/// Importance weights that retarget posterior draws to the tempered density
/// proportional to L^beta p. beta = 1 returns exactly uniform weights.
Vector tempered_weights(const Vector& log_densities, double beta);

/// Chain-average IP-SUR criterion at x. `max_samples` = 0 uses every draw.
double ipsur_criterion(const gp::TrainedGP& gp, const mcmc::PosteriorChain& chain, const Vector& x,
                       double beta = 1.0, Eigen::Index max_samples = 0);

struct SelectionResult {
  std::string strategy;
  Vector x;
  double criterion = 0.0;  // IPSUR/IOPT: integrated determinant; CSQ/DOPT: |C_n(x)|
  int evals = 0;
  double wall_seconds = 0.0;
  bool degenerate = false;      // criterion constant over every evaluated point
  Eigen::Index stride = 1;      // chain stride used for IP-SUR nodes
  std::optional<Vector> map;    // CSQ only
  double cooling_constant = 0.0;
};

SelectionResult ipsur_select(const inverse::InverseProblem& ip, const mcmc::PosteriorChain& chain,
                             const DesignStrategy& strategy);
SelectionResult csq_select(const inverse::InverseProblem& ip, const DesignStrategy& strategy);
SelectionResult d_optimal_select(const gp::TrainedGP& gp, const Box& box, const optim::AnnealConfig& cfg);
SelectionResult i_optimal_select(const gp::TrainedGP& gp, const Box& box, const optim::AnnealConfig& cfg, int m_int);

/// Dispatches on strategy.kind.
SelectionResult select_next(const DesignStrategy& strategy, const inverse::InverseProblem& ip,
                            const mcmc::PosteriorChain& chain);

/// First m points of a scrambled-free Sobol sequence mapped to the box (the origin is skipped).
Matrix sobol_nodes(const Box& box, int m);

/// One-line JSON record: strategy, iteration, selected point, criterion value, evals, wall time.
std::string selection_record_json(const SelectionResult& r, int iteration);

}  // namespace seqdesign::design
