#include "seqdesign/gp.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace seqdesign::gp {

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::rbf:
      return "rbf";
    case KernelFamily::matern32:
      return "matern32";
    case KernelFamily::matern52:
      return "matern52";
  }
  return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
  if (name == "rbf" || name == "RBF") return KernelFamily::rbf;
  if (name == "matern32" || name == "Matern32" || name == "matern-3/2") return KernelFamily::matern32;
  if (name == "matern52" || name == "Matern52" || name == "matern-5/2") return KernelFamily::matern52;
  throw ConfigError("unknown kernel family '" + std::string(name) + "'");
}

double correlation(KernelFamily family, const Vector& x, const Vector& x2, const Vector& lengthscales) {
  return correlation_r2(family, ((x - x2).array() / lengthscales.array()).square().sum());
}

double correlation_r2(KernelFamily family, double r2) {
  switch (family) {
    case KernelFamily::rbf:
      return std::exp(-0.5 * r2);
    case KernelFamily::matern32: {
      const double s = std::sqrt(3.0 * r2);
      return (1.0 + s) * std::exp(-s);
    }
    case KernelFamily::matern52: {
      const double s = std::sqrt(5.0 * r2);
      return (1.0 + s + 5.0 * r2 / 3.0) * std::exp(-s);
    }
  }
  return 0.0;
}

Eigen::Index KernelSpec::input_dim() const {
  return latent.empty() ? 0 : latent.front().lengthscales.size();
}

void KernelSpec::validate() const {
  if (latent.empty()) throw ConfigError("kernel spec needs at least one latent process");
  if (mixing.rows() != num_latent()) throw ConfigError("mixing matrix must have one row per latent process");
  if (mixing.cols() == 0) throw ConfigError("kernel spec needs at least one output");
  if (nugget.size() != mixing.cols()) throw ConfigError("nugget must have one entry per output");
  const Eigen::Index p = input_dim();
  if (p == 0) throw ConfigError("lengthscales must be non-empty");
  for (const auto& k : latent) {
    if (k.lengthscales.size() != p) throw ConfigError("all latent kernels must share the input dimension");
    if (!(k.lengthscales.array() > 0).all() || !k.lengthscales.allFinite()) {
      throw ConfigError("lengthscales must be strictly positive");
    }
    if (!(k.variance > 0) || !std::isfinite(k.variance)) throw ConfigError("latent variances must be strictly positive");
  }
  if (!(nugget.array() >= 0).all()) throw ConfigError("nuggets must be non-negative");
  if (!mixing.allFinite()) throw ConfigError("mixing coefficients must be finite");
}

Matrix KernelSpec::eval(const Vector& x, const Vector& x2) const {
  const Eigen::Index d = output_dim();
  Matrix out = Matrix::Zero(d, d);
  for (Eigen::Index q = 0; q < num_latent(); ++q) {
    const auto& k = latent[static_cast<std::size_t>(q)];
    const double c = k.variance * correlation(k.family, x, x2, k.lengthscales);
    out.noalias() += c * mixing.row(q).transpose() * mixing.row(q);
  }
  return out;
}

KernelSpec KernelSpec::make_default(KernelFamily family, const Vector& lengthscales, Eigen::Index output_dim,
                                    double variance, double nugget) {
  KernelSpec spec;
  for (Eigen::Index q = 0; q < output_dim; ++q) spec.latent.push_back({family, lengthscales, variance});
  spec.mixing = Matrix::Identity(output_dim, output_dim);
  spec.nugget = Vector::Constant(output_dim, nugget);
  return spec;
}

OutputScaling OutputScaling::identity(Eigen::Index d) { return {Vector::Zero(d), Vector::Ones(d)}; }

OutputScaling OutputScaling::from_data(const Matrix& outputs) {
  const Eigen::Index d = outputs.cols();
  OutputScaling s{Vector::Zero(d), Vector::Ones(d)};
  if (outputs.rows() == 0) return s;
  s.shift = outputs.colwise().mean().transpose();
  if (outputs.rows() < 2) return s;
  for (Eigen::Index j = 0; j < d; ++j) {
    const double var = (outputs.col(j).array() - s.shift[j]).square().sum() / static_cast<double>(outputs.rows() - 1);
    const double sd = std::sqrt(var);
    const double floor = 1e-12 * std::max(1.0, std::abs(s.shift[j]));
    s.scale[j] = sd > floor ? sd : 1.0;
  }
  return s;
}

Matrix OutputScaling::normalize(const Matrix& outputs) const {
  Matrix z = outputs;
  for (Eigen::Index j = 0; j < z.cols(); ++j) z.col(j) = (z.col(j).array() - shift[j]) / scale[j];
  return z;
}

Matrix gram_matrix(const KernelSpec& spec, const Matrix& inputs) {
  const Eigen::Index n = inputs.rows();
  const Eigen::Index d = spec.output_dim();
  Matrix k(n * d, n * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector xi = inputs.row(i).transpose();
    for (Eigen::Index j = 0; j <= i; ++j) {
      const Matrix block = spec.eval(xi, inputs.row(j).transpose());
      k.block(i * d, j * d, d, d) = block;
      if (i != j) k.block(j * d, i * d, d, d) = block.transpose();
    }
    for (Eigen::Index a = 0; a < d; ++a) k(i * d + a, i * d + a) += spec.nugget[a];
  }
  return k;
}

namespace {

std::pair<Eigen::Index, Eigen::Index> closest_pair(const Matrix& inputs) {
  std::pair<Eigen::Index, Eigen::Index> best{0, inputs.rows() > 1 ? 1 : 0};
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < inputs.rows(); ++j) {
      const double dist = (inputs.row(i) - inputs.row(j)).norm();
      if (dist < best_d) {
        best_d = dist;
        best = {i, j};
      }
    }
  }
  return best;
}

bool factor_accepted(const Eigen::LLT<Matrix>& llt, double level, double mean_diag) {
  if (llt.info() != Eigen::Success) return false;
  const Vector piv = llt.matrixLLT().diagonal();
  if (!piv.allFinite()) return false;
  const double floor = (level == 0.0 ? 1e-13 : 0.1 * level) * mean_diag;
  return piv.array().square().minCoeff() >= floor;
}

Vector flatten_point_major(const Matrix& z) {
  // Row i of z becomes entries [i*d, (i+1)*d).
  Vector out(z.size());
  for (Eigen::Index i = 0; i < z.rows(); ++i) out.segment(i * z.cols(), z.cols()) = z.row(i).transpose();
  return out;
}

Matrix symmetric_psd(const Matrix& m) {
  Matrix sym = 0.5 * (m + m.transpose());
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() == Eigen::Success) return sym;
  return clamp_psd(sym);
}

}  // namespace

TrainedGP condition(const KernelSpec& spec, Matrix inputs, Matrix outputs, OutputScaling scaling,
                    const ConditionOptions& options) {
  spec.validate();
  const Eigen::Index d = spec.output_dim();
  if (inputs.rows() != outputs.rows()) throw ConfigError("inputs and outputs must have the same number of rows");
  if (inputs.rows() > 0 && inputs.cols() != spec.input_dim()) throw ConfigError("input dimension does not match kernel");
  if (inputs.rows() > 0 && outputs.cols() != d) throw ConfigError("output dimension does not match kernel");
  if (scaling.shift.size() != d || scaling.scale.size() != d) throw ConfigError("output scaling has wrong dimension");
  if (inputs.rows() == 0) {
    inputs.resize(0, spec.input_dim());
    outputs.resize(0, d);
  }
  if (!inputs.allFinite() || !outputs.allFinite()) throw ConfigError("training data must be finite");

  TrainedGP gp;
  gp.spec_ = spec;
  gp.inputs_ = std::move(inputs);
  gp.outputs_ = std::move(outputs);
  gp.scaling_ = std::move(scaling);
  gp.options_ = options;

  const Eigen::Index n = gp.inputs_.rows();
  if (n == 0) {
    gp.alpha_.resize(0);
    return gp;
  }
  const Matrix k = gram_matrix(gp.spec_, gp.inputs_);
  const double mean_diag = k.diagonal().mean();

  std::vector<double> ladder{0.0};
  if (options.allow_jitter) {
    for (double level = options.jitter_start; level <= options.jitter_max * (1 + 1e-9); level *= 10.0) {
      ladder.push_back(level);
    }
  }
  bool ok = false;
  for (double level : ladder) {
    Matrix kj = k;
    const double jitter = level * mean_diag;
    if (jitter > 0) kj.diagonal().array() += jitter;
    gp.chol_.compute(kj);
    if (factor_accepted(gp.chol_, level, mean_diag)) {
      gp.jitter_ = jitter;
      ok = true;
      break;
    }
  }
  if (!ok) {
    const auto [i, j] = closest_pair(gp.inputs_);
    std::ostringstream msg;
    msg << "Gram matrix is not positive definite after jitter escalation; inputs " << i << " and " << j
        << " are nearly duplicate (distance " << (gp.inputs_.row(i) - gp.inputs_.row(j)).norm() << ")";
    throw FactorizationError(msg.str(), i, j);
  }
  const Vector z = flatten_point_major(gp.scaling_.normalize(gp.outputs_));
  gp.alpha_ = gp.chol_.solve(z);
  gp.log_det_ = 2.0 * gp.chol_.matrixLLT().diagonal().array().log().sum();
  return gp;
}

TrainedGP condition(const KernelSpec& spec, Matrix inputs, Matrix outputs) {
  OutputScaling scaling = inputs.rows() == 0 ? OutputScaling::identity(spec.output_dim())
                                             : OutputScaling::from_data(outputs);
  return condition(spec, std::move(inputs), std::move(outputs), std::move(scaling));
}

Matrix TrainedGP::train_cross(const Vector& x) const {
  const Eigen::Index n = num_points();
  const Eigen::Index d = output_dim();
  Matrix out(n * d, d);
  for (Eigen::Index i = 0; i < n; ++i) out.block(i * d, 0, d, d) = spec_.eval(inputs_.row(i).transpose(), x);
  return out;
}

Matrix TrainedGP::whitened_cross(const Vector& x) const {
  Matrix kx = train_cross(x);
  if (num_points() > 0) chol_.matrixL().solveInPlace(kx);
  return kx;
}

Matrix TrainedGP::denormalize_cov(const Matrix& cov) const {
  return scaling_.scale.asDiagonal() * cov * scaling_.scale.asDiagonal();
}

double TrainedGP::det_scale() const { return scaling_.scale.array().square().prod(); }

Prediction TrainedGP::predict(const Vector& x) const {
  if (x.size() != input_dim()) throw ConfigError("prediction point has wrong dimension");
  Matrix cov = spec_.eval(x, x);
  Vector mean_n = Vector::Zero(output_dim());
  if (num_points() > 0) {
    const Matrix kx = train_cross(x);
    mean_n = kx.transpose() * alpha_;
    const Matrix v = chol_.matrixL().solve(kx);
    cov.noalias() -= v.transpose() * v;
  }
  Prediction out;
  out.mean = scaling_.shift + scaling_.scale.cwiseProduct(mean_n);
  out.cov = denormalize_cov(symmetric_psd(cov));
  return out;
}

Vector TrainedGP::predict_mean(const Vector& x) const {
  if (num_points() == 0) return scaling_.shift;
  const Vector mean_n = train_cross(x).transpose() * alpha_;
  return scaling_.shift + scaling_.scale.cwiseProduct(mean_n);
}

Matrix TrainedGP::cross_cov(const Vector& xs, const Vector& x) const {
  Matrix c = spec_.eval(xs, x);
  if (num_points() > 0) c.noalias() -= whitened_cross(xs).transpose() * whitened_cross(x);
  return denormalize_cov(c);
}

QueryFactor::QueryFactor(const Matrix& cov_at_query, double prior_trace) {
  const Matrix sym = 0.5 * (cov_at_query + cov_at_query.transpose());
  const double trace = sym.trace();
  const auto d = static_cast<double>(sym.rows());
  if (!(trace > 1e-12 * prior_trace) || !std::isfinite(trace)) {
    exhausted_ = true;
    return;
  }
  llt_.compute(sym);
  const bool ok = llt_.info() == Eigen::Success &&
                  llt_.matrixLLT().diagonal().array().square().minCoeff() >= 1e-12 * trace / d;
  if (!ok) {
    Matrix jittered = sym;
    jittered.diagonal().array() += 1e-9 * trace / d;
    llt_.compute(jittered);
    if (llt_.info() != Eigen::Success) exhausted_ = true;
  }
}

Matrix QueryFactor::reduction(const Matrix& cross) const {
  const Matrix w = llt_.matrixL().solve(cross.transpose());
  return w.transpose() * w;
}

Matrix TrainedGP::updated_cov(const Vector& xs, const Vector& x) const {
  Matrix cs = spec_.eval(xs, xs);
  Matrix cx = spec_.eval(x, x);
  Matrix b = spec_.eval(xs, x);
  const double prior_trace = cx.trace();
  if (num_points() > 0) {
    const Matrix vs = whitened_cross(xs);
    const Matrix vx = whitened_cross(x);
    cs.noalias() -= vs.transpose() * vs;
    cx.noalias() -= vx.transpose() * vx;
    b.noalias() -= vs.transpose() * vx;
  }
  const QueryFactor factor(cx, prior_trace);
  if (factor.exhausted()) {
    throw ExhaustedPointError(
        "posterior covariance at the query point vanished; re-querying an exhausted point adds no information");
  }
  return denormalize_cov(clamp_psd(cs - factor.reduction(b)));
}

double TrainedGP::log_marginal_likelihood() const {
  const Eigen::Index n = num_points();
  if (n == 0) return 0.0;
  const auto nd = static_cast<double>(n * output_dim());
  const Vector z = flatten_point_major(scaling_.normalize(outputs_));
  const double quad = z.dot(alpha_);
  const double normalized = -0.5 * nd * std::log(2.0 * M_PI) - 0.5 * log_det_ - 0.5 * quad;
  // Jacobian of the standardization.
  return normalized - static_cast<double>(n) * scaling_.scale.array().log().sum();
}

TrainedGP TrainedGP::with_point(const Vector& x, const Vector& z) const {
  Matrix inputs(num_points() + 1, input_dim());
  Matrix outputs(num_points() + 1, output_dim());
  inputs.topRows(num_points()) = inputs_;
  outputs.topRows(num_points()) = outputs_;
  inputs.row(num_points()) = x.transpose();
  outputs.row(num_points()) = z.transpose();
  return condition(spec_, std::move(inputs), std::move(outputs), scaling_, options_);
}

}  // namespace seqdesign::gp
