#include "seqdesign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace seqdesign::metrics {

namespace {

constexpr double kWindow = 7.0;  // whitened distance beyond which a kernel term is dropped

Matrix strided_rows(const Matrix& m, Eigen::Index max_rows) {
  if (max_rows <= 0 || m.rows() <= max_rows) return m;
  Matrix out(max_rows, m.cols());
  for (Eigen::Index i = 0; i < max_rows; ++i) out.row(i) = m.row(i * m.rows() / max_rows);
  return out;
}

}  // namespace

KdeModel::KdeModel(const Matrix& points, double floor_scale) {
  const Eigen::Index m = points.rows();
  const Eigen::Index p = points.cols();
  if (m < 1 || p < 1) throw ConfigError("KDE needs at least one sample");
  const Vector mean = points.colwise().mean().transpose();
  const Matrix centered = points.rowwise() - mean.transpose();
  Matrix cov = m > 1 ? Matrix(centered.transpose() * centered / static_cast<double>(m - 1)) : Matrix::Zero(p, p);
  cov = 0.5 * (cov + cov.transpose());

  const double factor = std::pow(static_cast<double>(m), -1.0 / static_cast<double>(p + 4));
  const double floor = 1e-6 * floor_scale;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  Vector root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt() * factor;
  for (Eigen::Index i = 0; i < p; ++i) {
    if (!(root[i] >= floor)) {
      root[i] = floor;
      degenerate_ = true;
    }
  }
  const Matrix& v = eig.eigenvectors();
  bandwidth_ = v * root.asDiagonal() * v.transpose();
  inv_bandwidth_ = v * root.cwiseInverse().asDiagonal() * v.transpose();
  log_norm_ = -std::log(static_cast<double>(m)) - 0.5 * static_cast<double>(p) * std::log(2.0 * M_PI) -
              root.array().log().sum();

  const Matrix w = points * inv_bandwidth_.transpose();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return w(a, 0) < w(b, 0); });
  whitened_.resize(m, p);
  for (Eigen::Index i = 0; i < m; ++i) whitened_.row(i) = w.row(order[static_cast<std::size_t>(i)]);
}

double KdeModel::log_density(const Vector& x) const {
  const Vector wx = inv_bandwidth_ * x;
  const Eigen::Index m = whitened_.rows();
  auto col0 = whitened_.col(0);
  const auto* first = col0.data();
  const Eigen::Index lo = std::lower_bound(first, first + m, wx[0] - kWindow) - first;
  const Eigen::Index hi = std::upper_bound(first, first + m, wx[0] + kWindow) - first;

  auto log_sum = [&](Eigen::Index from, Eigen::Index to) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = from; i < to; ++i) {
      best = std::max(best, -0.5 * (whitened_.row(i).transpose() - wx).squaredNorm());
    }
    if (!std::isfinite(best)) return best;
    double s = 0.0;
    for (Eigen::Index i = from; i < to; ++i) {
      s += std::exp(-0.5 * (whitened_.row(i).transpose() - wx).squaredNorm() - best);
    }
    return best + std::log(s);
  };

  double ls = lo < hi ? log_sum(lo, hi) : -std::numeric_limits<double>::infinity();
  // Far from every sample: the windowed sum is empty or lost to underflow.
  if (!(ls > -0.5 * kWindow * kWindow)) ls = log_sum(0, m);
  return log_norm_ + ls;
}

double ivar(const gp::TrainedGP& gp, const Matrix& samples, Eigen::Index max_samples) {
  if (samples.rows() == 0) throw ConfigError("IVAR needs a non-empty chain");
  const Matrix pts = strided_rows(samples, max_samples);
  double total = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) total += psd_determinant(gp.predict(pts.row(i).transpose()).cov);
  return total / static_cast<double>(pts.rows());
}

double ivar(const gp::TrainedGP& gp, const mcmc::PosteriorChain& chain, Eigen::Index max_samples) {
  return ivar(gp, chain.samples, max_samples);
}

double entropy_kde(const Matrix& samples, const KdeOptions& options) {
  const KdeModel kde(samples, options.floor_scale);
  const Matrix pts = strided_rows(samples, options.max_eval_points);
  double total = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) total += kde.log_density(pts.row(i).transpose());
  return -total / static_cast<double>(pts.rows());
}

double kl_kde(const Matrix& samples, const Matrix& reference, const KdeOptions& options) {
  if (samples.cols() != reference.cols()) throw ConfigError("KL chains differ in dimension");
  const KdeModel p(samples, options.floor_scale);
  const KdeModel q(reference, options.floor_scale);
  const Matrix pts = strided_rows(samples, options.max_eval_points);
  double total = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    const Vector x = pts.row(i).transpose();
    total += p.log_density(x) - q.log_density(x);
  }
  return total / static_cast<double>(pts.rows());
}

MetricsRecord evaluate(int iteration, const gp::TrainedGP& gp, const mcmc::PosteriorChain& chain,
                       const Matrix& reference, const KdeOptions& options) {
  MetricsRecord r;
  r.iteration = iteration;
  r.ivar = ivar(gp, chain);
  r.entropy = entropy_kde(chain.samples, options);
  r.kl = reference.rows() > 0 ? kl_kde(chain.samples, reference, options) : std::numeric_limits<double>::quiet_NaN();
  r.acceptance_rate = chain.acceptance_rate;
  r.chain_length = chain.size();
  r.kde_degenerate = KdeModel(chain.samples, options.floor_scale).degenerate();
  return r;
}

}  // namespace seqdesign::metrics
