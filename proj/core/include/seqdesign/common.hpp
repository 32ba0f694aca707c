#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace seqdesign {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: config files, malformed matrices, out-of-range parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown: failed factorizations, all-NaN objectives, stuck chains.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Axis-aligned box in R^p.
class Box {
 public:
  Box() = default;
  Box(Vector lower, Vector upper);

  [[nodiscard]] Eigen::Index dim() const { return lower_.size(); }
  [[nodiscard]] const Vector& lower() const { return lower_; }
  [[nodiscard]] const Vector& upper() const { return upper_; }
  [[nodiscard]] Vector width() const { return upper_ - lower_; }
  [[nodiscard]] Vector center() const { return 0.5 * (lower_ + upper_); }
  [[nodiscard]] double diameter() const { return width().norm(); }
  [[nodiscard]] double log_volume() const;
  [[nodiscard]] bool contains(const Vector& x) const;

  /// Reflects x back into the box coordinate-wise (repeated reflection for large overshoots).
  [[nodiscard]] Vector reflect(const Vector& x) const;
  [[nodiscard]] Vector clamp(const Vector& x) const;

  /// Maps u in [0,1]^p to the box.
  [[nodiscard]] Vector from_unit(const Vector& u) const;
  [[nodiscard]] Vector to_unit(const Vector& x) const;

  [[nodiscard]] Vector sample_uniform(Rng& rng) const;

 private:
  Vector lower_;
  Vector upper_;
};

/// Determinant of a small symmetric PSD matrix after symmetrizing and clamping
/// negative eigenvalues to zero.
double psd_determinant(const Matrix& m);

/// Symmetrizes and clamps eigenvalues below zero.
Matrix clamp_psd(const Matrix& m);

/// Parses a full string as a double (locale-independent; accepts nan, inf, -inf).
/// Throws ConfigError naming `what` on malformed input.
double parse_number(std::string_view text, const std::string& what = "number");

/// Minimum eigenvalue of the symmetrized matrix.
double min_eigenvalue(const Matrix& m);

}  // namespace seqdesign
