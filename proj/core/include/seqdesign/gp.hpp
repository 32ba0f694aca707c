#pragma once

// Multi-output Gaussian-process regression with a linear model of
// coregionalization (LMC):
//
//   k(x, x') = sum_q  sigma_q^2 * rho_q(x, x') * a_q a_q^T  (+ diag(nugget) on the training diagonal)
//
// Outputs are standardized per column before conditioning; every public
// quantity (means, covariances, log-marginal likelihood) is reported in
// original output units.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "seqdesign/common.hpp"

namespace seqdesign::gp {

enum class KernelFamily { rbf, matern32, matern52 };

std::string to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

/// Stationary correlation rho(x, x') for a family with per-dimension lengthscales.
double correlation(KernelFamily family, const Vector& x, const Vector& x2, const Vector& lengthscales);
/// Same, from the squared scaled distance r2 = sum ((x - x') / l)^2.
double correlation_r2(KernelFamily family, double r2);

struct LatentKernel {
  KernelFamily family = KernelFamily::matern52;
  Vector lengthscales;
  double variance = 1.0;
};

struct KernelSpec {
  std::vector<LatentKernel> latent;  // Q latent processes
  Matrix mixing;                     // Q x d
  Vector nugget;                     // d, observation noise per output

  [[nodiscard]] Eigen::Index input_dim() const;
  [[nodiscard]] Eigen::Index output_dim() const { return mixing.cols(); }
  [[nodiscard]] Eigen::Index num_latent() const { return static_cast<Eigen::Index>(latent.size()); }

  /// Throws ConfigError on non-positive lengthscales/variances, negative nuggets or shape mismatch.
  void validate() const;

  /// d x d noise-free kernel block k(x, x2).
  [[nodiscard]] Matrix eval(const Vector& x, const Vector& x2) const;

  /// Q = d latent processes of one family, identity mixing, shared lengthscales.
  static KernelSpec make_default(KernelFamily family, const Vector& lengthscales, Eigen::Index output_dim,
                                 double variance = 1.0, double nugget = 0.0);
};

/// Per-output affine standardization: z_normalized = (z - shift) / scale.
/// `shift` doubles as the constant prior mean.
struct OutputScaling {
  Vector shift;
  Vector scale;

  static OutputScaling identity(Eigen::Index d);
  /// Column means and standard deviations; a zero spread falls back to unit scale.
  static OutputScaling from_data(const Matrix& outputs);

  [[nodiscard]] Matrix normalize(const Matrix& outputs) const;
};

/// Gram matrix that no jitter level can repair; names the closest pair of inputs.
class FactorizationError : public NumericalError {
 public:
  FactorizationError(const std::string& what, Eigen::Index first, Eigen::Index second)
      : NumericalError(what), first_(first), second_(second) {}
  [[nodiscard]] Eigen::Index first() const { return first_; }
  [[nodiscard]] Eigen::Index second() const { return second_; }

 private:
  Eigen::Index first_;
  Eigen::Index second_;
};

/// The query point carries no posterior variance left to remove.
class ExhaustedPointError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

struct ConditionOptions {
  // Jitter ladder, relative to the mean Gram diagonal: 0, start, 10*start, ..., max.
  double jitter_start = 1e-10;
  double jitter_max = 1e-6;
  bool allow_jitter = true;
};

struct Prediction {
  Vector mean;  // d
  Matrix cov;   // d x d, symmetric, clamped PSD
};

/// Immutable conditioned GP. Safe to share across threads.
class TrainedGP {
 public:
  [[nodiscard]] const KernelSpec& spec() const { return spec_; }
  [[nodiscard]] const Matrix& inputs() const { return inputs_; }
  [[nodiscard]] const Matrix& outputs() const { return outputs_; }
  [[nodiscard]] const OutputScaling& scaling() const { return scaling_; }
  [[nodiscard]] const Vector& mean_const() const { return scaling_.shift; }
  [[nodiscard]] Eigen::Index num_points() const { return inputs_.rows(); }
  [[nodiscard]] Eigen::Index input_dim() const { return spec_.input_dim(); }
  [[nodiscard]] Eigen::Index output_dim() const { return spec_.output_dim(); }
  /// Absolute jitter that was added to the Gram diagonal (0 when none was needed).
  [[nodiscard]] double jitter() const { return jitter_; }

  [[nodiscard]] Prediction predict(const Vector& x) const;
  [[nodiscard]] Vector predict_mean(const Vector& x) const;
  /// Posterior cross-covariance C_n(xs, x).
  [[nodiscard]] Matrix cross_cov(const Vector& xs, const Vector& x) const;
  /// Covariance at xs after conditioning on a noise-free observation at x:
  ///   C_n(xs) - C_n(xs, x) C_n(x)^{-1} C_n(xs, x)^T.
  /// Throws ExhaustedPointError when C_n(x) vanishes.
  [[nodiscard]] Matrix updated_cov(const Vector& xs, const Vector& x) const;
  [[nodiscard]] double log_marginal_likelihood() const;

  /// Batch re-conditioning on the training set plus (x, z), keeping the spec and scaling.
  [[nodiscard]] TrainedGP with_point(const Vector& x, const Vector& z) const;

  // Normalized-unit building blocks for acquisition fast paths.

  /// K(X, x): (n d) x d, normalized units.
  [[nodiscard]] Matrix train_cross(const Vector& x) const;
  /// L^{-1} K(X, x) where L L^T is the jittered Gram matrix.
  [[nodiscard]] Matrix whitened_cross(const Vector& x) const;
  /// Prior block k(x, x2) in normalized units (no nugget).
  [[nodiscard]] Matrix prior_block(const Vector& x, const Vector& x2) const { return spec_.eval(x, x2); }
  /// Maps a normalized d x d covariance to original output units.
  [[nodiscard]] Matrix denormalize_cov(const Matrix& cov) const;
  /// prod_j scale_j^2: converts normalized determinants to original units.
  [[nodiscard]] double det_scale() const;
  [[nodiscard]] const Eigen::LLT<Matrix>& factor() const { return chol_; }

 private:
  friend TrainedGP condition(const KernelSpec&, Matrix, Matrix, OutputScaling, const ConditionOptions&);
  TrainedGP() = default;

  KernelSpec spec_;
  Matrix inputs_;
  Matrix outputs_;
  OutputScaling scaling_;
  ConditionOptions options_;
  Eigen::LLT<Matrix> chol_;
  Vector alpha_;  // K^{-1} z (normalized, point-major flattening)
  double log_det_ = 0.0;
  double jitter_ = 0.0;
};

TrainedGP condition(const KernelSpec& spec, Matrix inputs, Matrix outputs, OutputScaling scaling,
                    const ConditionOptions& options = {});
/// Standardizes outputs from the data itself.
TrainedGP condition(const KernelSpec& spec, Matrix inputs, Matrix outputs);

/// Gram matrix K(X) in normalized units, point-major (row i*d + a), nugget on the diagonal.
Matrix gram_matrix(const KernelSpec& spec, const Matrix& inputs);

/// C_n(xs) - cross C_n(x)^{-1} cross^T with the relative jitter rule for near-singular C_n(x).
/// Shared by TrainedGP::updated_cov and the cached acquisition path.
class QueryFactor {
 public:
  explicit QueryFactor(const Matrix& cov_at_query, double prior_trace);
  [[nodiscard]] bool exhausted() const { return exhausted_; }
  /// cross * C_n(x)^{-1} * cross^T
  [[nodiscard]] Matrix reduction(const Matrix& cross) const;

 private:
  bool exhausted_ = false;
  Eigen::LLT<Matrix> llt_;
};

// ---------------------------------------------------------------------------
// Hyperparameter fitting

struct HyperBounds {
  Vector lengthscale_lo;  // per input dimension
  Vector lengthscale_hi;
  double variance_lo = 1e-2;
  double variance_hi = 1e2;
  double mixing_lo = -5.0;
  double mixing_hi = 5.0;
  double nugget_lo = 1e-8;
  double nugget_hi = 1e-2;

  /// Lengthscales in [lo_frac, hi_frac] times the box width.
  static HyperBounds for_box(const Box& box, double lo_frac = 0.02, double hi_frac = 20.0);
};

/// Flat view of the free hyperparameters of a spec. Positive quantities live in
/// log space; a parameter whose bounds coincide is frozen at that value.
class Parameterization {
 public:
  Parameterization(const KernelSpec& base, const HyperBounds& bounds);

  [[nodiscard]] Eigen::Index size() const { return static_cast<Eigen::Index>(slots_.size()); }
  [[nodiscard]] Vector pack(const KernelSpec& spec) const;
  [[nodiscard]] KernelSpec unpack(const Vector& theta) const;
  [[nodiscard]] const Vector& lower() const { return lower_; }
  [[nodiscard]] const Vector& upper() const { return upper_; }
  [[nodiscard]] std::string name(Eigen::Index i) const;

  enum class Kind { log_lengthscale, log_variance, mixing, log_nugget };
  struct Slot {
    Kind kind;
    Eigen::Index q;    // latent index (or output index for nuggets)
    Eigen::Index idx;  // input dim for lengthscales, output for mixing
  };
  [[nodiscard]] const std::vector<Slot>& slots() const { return slots_; }

 private:
  KernelSpec base_;
  std::vector<Slot> slots_;
  Vector lower_;
  Vector upper_;
};

struct LmlEvaluation {
  double value = 0.0;  // normalized units
  Vector gradient;     // w.r.t. Parameterization coordinates
  bool ok = true;
};

/// LML of normalized outputs and its gradient. `analytic=false` uses central
/// differences with step `fd_step` in parameter space.
LmlEvaluation lml_with_gradient(const Parameterization& param, const Vector& theta, const Matrix& inputs,
                                const Matrix& normalized_outputs, bool analytic = true, double fd_step = 1e-5);

struct FitOptions {
  int restarts = 2;
  int max_iterations = 200;
  std::uint64_t seed = 0;
  bool analytic_gradient = true;
};

struct FitResult {
  KernelSpec spec;
  double lml = 0.0;          // original output units
  double initial_lml = 0.0;  // LML(spec0), original output units
  bool degraded = false;     // every optimizer run failed to make progress
  int evaluations = 0;
};

/// Maximizes the LML over `bounds` from spec0 plus `options.restarts` random starts.
/// The result never has a lower LML than spec0 (spec0 is clamped into the bounds first).
FitResult fit_hyperparameters(const KernelSpec& spec0, const Matrix& inputs, const Matrix& outputs,
                              const HyperBounds& bounds, const FitOptions& options,
                              std::optional<OutputScaling> scaling = std::nullopt);

// ---------------------------------------------------------------------------
// Persistence (JSON, format_version 1)

std::string to_json(const TrainedGP& gp);
TrainedGP gp_from_json(const std::string& text);
void save_gp(const TrainedGP& gp, const std::string& path);
TrainedGP load_gp(const std::string& path);

}  // namespace seqdesign::gp
