#include <cmath>
#include <limits>

#include "seqdesign/gp.hpp"
#include "seqdesign/optim.hpp"

namespace seqdesign::gp {

HyperBounds HyperBounds::for_box(const Box& box, double lo_frac, double hi_frac) {
  HyperBounds b;
  b.lengthscale_lo = lo_frac * box.width();
  b.lengthscale_hi = hi_frac * box.width();
  return b;
}

Parameterization::Parameterization(const KernelSpec& base, const HyperBounds& bounds) : base_(base) {
  base_.validate();
  const Eigen::Index p = base_.input_dim();
  const Eigen::Index d = base_.output_dim();
  if (bounds.lengthscale_lo.size() != p || bounds.lengthscale_hi.size() != p) {
    throw ConfigError("lengthscale bounds must have one entry per input dimension");
  }
  std::vector<double> lo;
  std::vector<double> hi;
  auto add = [&](Kind kind, Eigen::Index q, Eigen::Index idx, double l, double h, bool log_space) {
    if (l > h) throw ConfigError("hyperparameter bounds are inverted");
    slots_.push_back({kind, q, idx});
    lo.push_back(log_space ? std::log(l) : l);
    hi.push_back(log_space ? std::log(h) : h);
  };
  for (Eigen::Index q = 0; q < base_.num_latent(); ++q) {
    auto& k = base_.latent[static_cast<std::size_t>(q)];
    for (Eigen::Index j = 0; j < p; ++j) {
      const double l = bounds.lengthscale_lo[j];
      const double h = bounds.lengthscale_hi[j];
      if (l < h) {
        add(Kind::log_lengthscale, q, j, l, h, true);
      } else {
        k.lengthscales[j] = l;
      }
    }
    if (bounds.variance_lo < bounds.variance_hi) {
      add(Kind::log_variance, q, 0, bounds.variance_lo, bounds.variance_hi, true);
    } else {
      k.variance = bounds.variance_lo;
    }
  }
  for (Eigen::Index q = 0; q < base_.num_latent(); ++q) {
    for (Eigen::Index a = 0; a < d; ++a) {
      if (bounds.mixing_lo < bounds.mixing_hi) {
        add(Kind::mixing, q, a, bounds.mixing_lo, bounds.mixing_hi, false);
      } else {
        base_.mixing(q, a) = bounds.mixing_lo;
      }
    }
  }
  for (Eigen::Index a = 0; a < d; ++a) {
    if (bounds.nugget_lo < bounds.nugget_hi) {
      if (!(bounds.nugget_lo > 0)) throw ConfigError("a fitted nugget needs a strictly positive lower bound");
      add(Kind::log_nugget, a, a, bounds.nugget_lo, bounds.nugget_hi, true);
    } else {
      base_.nugget[a] = bounds.nugget_lo;
    }
  }
  lower_ = Eigen::Map<Vector>(lo.data(), static_cast<Eigen::Index>(lo.size()));
  upper_ = Eigen::Map<Vector>(hi.data(), static_cast<Eigen::Index>(hi.size()));
}

Vector Parameterization::pack(const KernelSpec& spec) const {
  Vector theta(size());
  for (Eigen::Index i = 0; i < size(); ++i) {
    const Slot& s = slots_[static_cast<std::size_t>(i)];
    const auto q = static_cast<std::size_t>(s.q);
    switch (s.kind) {
      case Kind::log_lengthscale:
        theta[i] = std::log(spec.latent[q].lengthscales[s.idx]);
        break;
      case Kind::log_variance:
        theta[i] = std::log(spec.latent[q].variance);
        break;
      case Kind::mixing:
        theta[i] = spec.mixing(s.q, s.idx);
        break;
      case Kind::log_nugget:
        theta[i] = std::log(std::max(spec.nugget[s.idx], 1e-300));
        break;
    }
  }
  return theta.cwiseMax(lower_).cwiseMin(upper_);
}

KernelSpec Parameterization::unpack(const Vector& theta) const {
  KernelSpec spec = base_;
  for (Eigen::Index i = 0; i < size(); ++i) {
    const Slot& s = slots_[static_cast<std::size_t>(i)];
    const auto q = static_cast<std::size_t>(s.q);
    switch (s.kind) {
      case Kind::log_lengthscale:
        spec.latent[q].lengthscales[s.idx] = std::exp(theta[i]);
        break;
      case Kind::log_variance:
        spec.latent[q].variance = std::exp(theta[i]);
        break;
      case Kind::mixing:
        spec.mixing(s.q, s.idx) = theta[i];
        break;
      case Kind::log_nugget:
        spec.nugget[s.idx] = std::exp(theta[i]);
        break;
    }
  }
  return spec;
}

std::string Parameterization::name(Eigen::Index i) const {
  const Slot& s = slots_[static_cast<std::size_t>(i)];
  switch (s.kind) {
    case Kind::log_lengthscale:
      return "log_lengthscale[" + std::to_string(s.q) + "][" + std::to_string(s.idx) + "]";
    case Kind::log_variance:
      return "log_variance[" + std::to_string(s.q) + "]";
    case Kind::mixing:
      return "mixing[" + std::to_string(s.q) + "][" + std::to_string(s.idx) + "]";
    case Kind::log_nugget:
      return "log_nugget[" + std::to_string(s.idx) + "]";
  }
  return "?";
}

namespace {

struct Factored {
  Eigen::LLT<Matrix> llt;
  Vector alpha;
  double lml = 0.0;
  bool ok = false;
};

Vector flatten(const Matrix& z) {
  Vector out(z.size());
  for (Eigen::Index i = 0; i < z.rows(); ++i) out.segment(i * z.cols(), z.cols()) = z.row(i).transpose();
  return out;
}

Factored factor_lml(const KernelSpec& spec, const Matrix& inputs, const Vector& z) {
  Factored f;
  Matrix k = gram_matrix(spec, inputs);
  f.llt.compute(k);
  if (f.llt.info() != Eigen::Success) return f;
  const Vector diag = f.llt.matrixLLT().diagonal();
  if (!diag.allFinite() || diag.minCoeff() <= 0) return f;
  f.alpha = f.llt.solve(z);
  const double log_det = 2.0 * diag.array().log().sum();
  f.lml = -0.5 * static_cast<double>(z.size()) * std::log(2.0 * M_PI) - 0.5 * log_det - 0.5 * z.dot(f.alpha);
  f.ok = std::isfinite(f.lml);
  return f;
}

// d rho / d log(l_k) for the three stationary families.
double correlation_dlog_lengthscale(KernelFamily family, double r2, double scaled_sq) {
  switch (family) {
    case KernelFamily::rbf:
      return std::exp(-0.5 * r2) * scaled_sq;
    case KernelFamily::matern32: {
      const double s = std::sqrt(3.0 * r2);
      return 3.0 * std::exp(-s) * scaled_sq;
    }
    case KernelFamily::matern52: {
      const double s = std::sqrt(5.0 * r2);
      return (5.0 / 3.0) * (1.0 + s) * std::exp(-s) * scaled_sq;
    }
  }
  return 0.0;
}

Vector analytic_gradient(const Parameterization& param, const KernelSpec& spec, const Matrix& inputs,
                         const Factored& f) {
  const Eigen::Index n = inputs.rows();
  const Eigen::Index d = spec.output_dim();
  const Eigen::Index p = spec.input_dim();
  const Eigen::Index nd = n * d;
  // W = alpha alpha^T - K^{-1};  dLML/dtheta = 0.5 tr(W dK/dtheta)
  Matrix w = f.llt.solve(Matrix::Identity(nd, nd));
  w = f.alpha * f.alpha.transpose() - w;

  Vector grad = Vector::Zero(param.size());
  // Index slots by latent process for the kernel-dependent parts.
  for (Eigen::Index q = 0; q < spec.num_latent(); ++q) {
    const auto& lk = spec.latent[static_cast<std::size_t>(q)];
    const Vector a = spec.mixing.row(q).transpose();
    // M(i,j) = a^T W_ij a ;  V(i,j,:) = W_ij a
    Matrix m(n, n);
    std::vector<Matrix> v(static_cast<std::size_t>(d), Matrix(n, n));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const Vector wa = w.block(i * d, j * d, d, d) * a;
        m(i, j) = a.dot(wa);
        for (Eigen::Index c = 0; c < d; ++c) v[static_cast<std::size_t>(c)](i, j) = wa[c];
      }
    }
    Matrix r(n, n);
    std::vector<Matrix> dr(static_cast<std::size_t>(p), Matrix(n, n));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j <= i; ++j) {
        const Vector scaled = (inputs.row(i) - inputs.row(j)).transpose().cwiseQuotient(lk.lengthscales);
        const Vector sq = scaled.array().square();
        const double r2 = sq.sum();
        const double rho = correlation(lk.family, inputs.row(i).transpose(), inputs.row(j).transpose(), lk.lengthscales);
        r(i, j) = r(j, i) = rho;
        for (Eigen::Index k = 0; k < p; ++k) {
          const double g = correlation_dlog_lengthscale(lk.family, r2, sq[k]);
          dr[static_cast<std::size_t>(k)](i, j) = dr[static_cast<std::size_t>(k)](j, i) = g;
        }
      }
    }
    for (Eigen::Index s = 0; s < param.size(); ++s) {
      const auto& slot = param.slots()[static_cast<std::size_t>(s)];
      if (slot.q != q && slot.kind != Parameterization::Kind::log_nugget) continue;
      switch (slot.kind) {
        case Parameterization::Kind::log_lengthscale:
          grad[s] = 0.5 * lk.variance * (dr[static_cast<std::size_t>(slot.idx)].array() * m.array()).sum();
          break;
        case Parameterization::Kind::log_variance:
          grad[s] = 0.5 * lk.variance * (r.array() * m.array()).sum();
          break;
        case Parameterization::Kind::mixing:
          grad[s] = lk.variance * (r.array() * v[static_cast<std::size_t>(slot.idx)].array()).sum();
          break;
        case Parameterization::Kind::log_nugget:
          break;
      }
    }
  }
  for (Eigen::Index s = 0; s < param.size(); ++s) {
    const auto& slot = param.slots()[static_cast<std::size_t>(s)];
    if (slot.kind != Parameterization::Kind::log_nugget) continue;
    double tr = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) tr += w(i * d + slot.idx, i * d + slot.idx);
    grad[s] = 0.5 * spec.nugget[slot.idx] * tr;
  }
  return grad;
}

}  // namespace

LmlEvaluation lml_with_gradient(const Parameterization& param, const Vector& theta, const Matrix& inputs,
                                const Matrix& normalized_outputs, bool analytic, double fd_step) {
  LmlEvaluation out;
  const Vector z = flatten(normalized_outputs);
  const KernelSpec spec = param.unpack(theta);
  const Factored f = factor_lml(spec, inputs, z);
  out.gradient = Vector::Zero(param.size());
  if (!f.ok) {
    out.ok = false;
    out.value = -std::numeric_limits<double>::infinity();
    return out;
  }
  out.value = f.lml;
  if (analytic) {
    out.gradient = analytic_gradient(param, spec, inputs, f);
    return out;
  }
  for (Eigen::Index i = 0; i < param.size(); ++i) {
    Vector tp = theta;
    Vector tm = theta;
    tp[i] += fd_step;
    tm[i] -= fd_step;
    const Factored fp = factor_lml(param.unpack(tp), inputs, z);
    const Factored fm = factor_lml(param.unpack(tm), inputs, z);
    if (!fp.ok || !fm.ok) {
      out.ok = false;
      return out;
    }
    out.gradient[i] = (fp.lml - fm.lml) / (2.0 * fd_step);
  }
  return out;
}

FitResult fit_hyperparameters(const KernelSpec& spec0, const Matrix& inputs, const Matrix& outputs,
                              const HyperBounds& bounds, const FitOptions& options,
                              std::optional<OutputScaling> scaling) {
  spec0.validate();
  if (inputs.rows() == 0) throw ConfigError("cannot fit hyperparameters without training data");
  const OutputScaling sc = scaling ? *scaling : OutputScaling::from_data(outputs);
  const Matrix zn = sc.normalize(outputs);
  const double jacobian = static_cast<double>(inputs.rows()) * sc.scale.array().log().sum();
  const Parameterization param(spec0, bounds);

  FitResult result;
  result.spec = spec0;
  {
    const Factored f0 = factor_lml(spec0, inputs, flatten(zn));
    result.initial_lml = f0.ok ? f0.lml - jacobian : -std::numeric_limits<double>::infinity();
    result.lml = result.initial_lml;
  }
  if (param.size() == 0) return result;

  int evaluations = 0;
  const optim::ValueAndGradient objective = [&](const Vector& theta, Vector& grad) {
    ++evaluations;
    const LmlEvaluation e = lml_with_gradient(param, theta, inputs, zn, options.analytic_gradient);
    if (!e.ok) return std::numeric_limits<double>::infinity();
    grad = -e.gradient;
    return -e.value;
  };

  Rng rng(options.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Vector> starts{param.pack(spec0)};
  for (int r = 0; r < options.restarts; ++r) {
    Vector t(param.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      t[i] = param.lower()[i] + unif(rng) * (param.upper()[i] - param.lower()[i]);
    }
    starts.push_back(std::move(t));
  }

  bool any_progress = false;
  optim::LocalOptions local;
  local.max_iterations = options.max_iterations;
  for (const Vector& start : starts) {
    const optim::LocalResult lr = optim::minimize_projected_lbfgs(objective, start, param.lower(), param.upper(), local);
    any_progress = any_progress || lr.progressed;
    if (!std::isfinite(lr.f)) continue;
    const double lml = -lr.f - jacobian;
    if (lml > result.lml) {
      result.lml = lml;
      result.spec = param.unpack(lr.x);
    }
  }
  result.evaluations = evaluations;
  result.degraded = !any_progress || !std::isfinite(result.lml);
  return result;
}

}  // namespace seqdesign::gp
