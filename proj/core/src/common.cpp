#include "seqdesign/common.hpp"

#include <charconv>
#include <cmath>
#include <limits>

namespace seqdesign {

Box::Box(Vector lower, Vector upper) : lower_(std::move(lower)), upper_(std::move(upper)) {
  if (lower_.size() != upper_.size() || lower_.size() == 0) {
    throw ConfigError("box bounds must be non-empty and of equal dimension");
  }
  for (Eigen::Index i = 0; i < lower_.size(); ++i) {
    if (!(upper_[i] > lower_[i]) || !std::isfinite(lower_[i]) || !std::isfinite(upper_[i])) {
      throw ConfigError("box must have positive finite width in every coordinate");
    }
  }
}

double Box::log_volume() const { return (upper_ - lower_).array().log().sum(); }

bool Box::contains(const Vector& x) const {
  if (x.size() != lower_.size()) return false;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!(x[i] >= lower_[i] && x[i] <= upper_[i])) return false;
  }
  return true;
}

Vector Box::reflect(const Vector& x) const {
  Vector y = x;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double lo = lower_[i];
    const double w = upper_[i] - lo;
    if (!std::isfinite(y[i])) {
      y[i] = lo + 0.5 * w;
      continue;
    }
    // Unfold onto a period of length 2w.
    double t = std::fmod(y[i] - lo, 2.0 * w);
    if (t < 0) t += 2.0 * w;
    y[i] = t <= w ? lo + t : lo + 2.0 * w - t;
  }
  return y;
}

Vector Box::clamp(const Vector& x) const { return x.cwiseMax(lower_).cwiseMin(upper_); }

Vector Box::from_unit(const Vector& u) const {
  return lower_ + (u.array() * (upper_ - lower_).array()).matrix();
}

Vector Box::to_unit(const Vector& x) const {
  return ((x - lower_).array() / (upper_ - lower_).array()).matrix();
}

Vector Box::sample_uniform(Rng& rng) const {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector u(dim());
  for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = unif(rng);
  return from_unit(u);
}

Matrix clamp_psd(const Matrix& m) {
  const Matrix sym = 0.5 * (m + m.transpose());
  if (sym.rows() == 1) {
    Matrix out(1, 1);
    out(0, 0) = std::max(sym(0, 0), 0.0);
    return out;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  const Vector vals = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
}

double psd_determinant(const Matrix& m) {
  const Matrix sym = 0.5 * (m + m.transpose());
  switch (sym.rows()) {
    case 0:
      return 1.0;
    case 1:
      return std::max(sym(0, 0), 0.0);
    default:
      break;
  }
  // A Cholesky success certifies positive definiteness; fall back to the
  // clamped spectrum otherwise.
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() == Eigen::Success) {
    const auto diag = llt.matrixLLT().diagonal();
    const double d = diag.prod();
    return d * d;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseMax(0.0).prod();
}

double min_eigenvalue(const Matrix& m) {
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

double parse_number(std::string_view text, const std::string& what) {
  const auto b = text.find_first_not_of(" \t\r");
  const auto e = text.find_last_not_of(" \t\r");
  if (b == std::string_view::npos) throw ConfigError("empty " + what);
  text = text.substr(b, e - b + 1);
  if (text == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  // Subnormals report result_out_of_range but are still parsed.
  if ((ec != std::errc() && ec != std::errc::result_out_of_range) || end != text.data() + text.size()) {
    throw ConfigError("malformed " + what + " '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace seqdesign
