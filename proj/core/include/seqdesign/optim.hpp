#pragma once

// Bounded global minimization by simulated annealing with logarithmic cooling
// T_k = C / log(k + e), followed by a coordinate-wise golden-section polish
// around the best point. Also hosts the projected L-BFGS used for
// hyperparameter fitting.

#include <cstdint>
#include <functional>
#include <vector>

#include "seqdesign/common.hpp"

namespace seqdesign::optim {

struct AnnealConfig {
  double cooling_constant = 0.0;  // C; <= 0 selects 5x the objective range over the probe points
  int max_evals = 2000;           // hard cap on objective evaluations, polish included
  int n_restarts = 1;
  int polish_evals = 200;
  int probe_points = 50;
  double step_scale = 0.3;  // initial Gaussian step, as a fraction of the box width
  double step_decay = 1.0;  // step ~ (T_k / T_1)^step_decay
  std::uint64_t seed = 0;

  void validate() const;
  [[nodiscard]] double temperature(int k, double c) const;
};

struct MinimizeResult {
  Vector x;
  double f = 0.0;
  int evals = 0;
  int nan_evals = 0;
  double cooling_constant = 0.0;
  /// True when every finite evaluation returned the same value.
  bool degenerate = false;
  /// Running minimum after each evaluation.
  std::vector<double> best_trace;
};

using Objective = std::function<double(const Vector&)>;

/// Best-seen minimizer over the box. NaN evaluations are rejected and counted;
/// if every evaluation is NaN a NumericalError is thrown.
MinimizeResult minimize(const Objective& f, const Box& box, const AnnealConfig& cfg);

// ---------------------------------------------------------------------------

/// Returns f(x) and writes the gradient; +inf (or NaN) signals an infeasible point.
using ValueAndGradient = std::function<double(const Vector& x, Vector& grad)>;

struct LocalOptions {
  int max_iterations = 200;
  int history = 10;
  double gradient_tol = 1e-6;
  double relative_tol = 1e-10;
};

struct LocalResult {
  Vector x;
  double f = 0.0;
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
  /// False when not a single line search succeeded.
  bool progressed = false;
};

/// Projected limited-memory BFGS on the box [lower, upper].
LocalResult minimize_projected_lbfgs(const ValueAndGradient& f, const Vector& x0, const Vector& lower,
                                     const Vector& upper, const LocalOptions& options = {});

}  // namespace seqdesign::optim
