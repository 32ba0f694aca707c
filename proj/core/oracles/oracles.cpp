#include "oracles.hpp"

#include <cmath>
#include <limits>
#include <random>

namespace seqdesign::oracles {

namespace {

double corr(gp::KernelFamily family, const Vector& x, const Vector& x2, const Vector& ls) {
  double r2 = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double t = (x[k] - x2[k]) / ls[k];
    r2 += t * t;
  }
  const double r = std::sqrt(r2);
  switch (family) {
    case gp::KernelFamily::rbf:
      return std::exp(-r2 / 2.0);
    case gp::KernelFamily::matern32:
      return (1.0 + std::sqrt(3.0) * r) * std::exp(-std::sqrt(3.0) * r);
    case gp::KernelFamily::matern52:
      return (1.0 + std::sqrt(5.0) * r + 5.0 * r2 / 3.0) * std::exp(-std::sqrt(5.0) * r);
  }
  return 0.0;
}

struct Dense {
  Matrix k_inv;
  Matrix inputs;
  Vector resid;  // z - shift, point-major
  Vector scale;
  const gp::KernelSpec* spec;
};

Dense make_dense(const gp::KernelSpec& spec, const Matrix& inputs, const Matrix& outputs, const gp::OutputScaling& s,
                 const std::vector<bool>& noisy) {
  Dense d;
  d.spec = &spec;
  d.inputs = inputs;
  d.scale = s.scale;
  const Eigen::Index n = inputs.rows();
  const Eigen::Index od = spec.output_dim();
  d.resid.resize(n * od);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index a = 0; a < od; ++a) d.resid[i * od + a] = outputs.rows() ? outputs(i, a) - s.shift[a] : 0.0;
  }
  if (n > 0) d.k_inv = Eigen::FullPivLU<Matrix>(dense_gram(spec, inputs, s.scale, noisy)).inverse();
  return d;
}

Matrix cross_block(const Dense& d, const Vector& x) {
  const Eigen::Index n = d.inputs.rows();
  const Eigen::Index od = d.spec->output_dim();
  Matrix out(n * od, od);
  const Matrix dm = d.scale.asDiagonal();
  for (Eigen::Index i = 0; i < n; ++i) out.block(i * od, 0, od, od) = dm * kernel_block(*d.spec, d.inputs.row(i).transpose(), x) * dm;
  return out;
}

Matrix prior_orig(const Dense& d, const Vector& a, const Vector& b) {
  const Matrix dm = d.scale.asDiagonal();
  return dm * kernel_block(*d.spec, a, b) * dm;
}

Matrix post_cross(const Dense& d, const Vector& xs, const Vector& x) {
  Matrix c = prior_orig(d, xs, x);
  if (d.inputs.rows() > 0) c -= cross_block(d, xs).transpose() * d.k_inv * cross_block(d, x);
  return c;
}

Vector post_mean(const Dense& d, const Vector& shift, const Vector& x) {
  Vector m = shift;
  if (d.inputs.rows() > 0) m += cross_block(d, x).transpose() * d.k_inv * d.resid;
  return m;
}

std::vector<bool> all_noisy(Eigen::Index n) { return std::vector<bool>(static_cast<std::size_t>(n), true); }

Matrix append_row(const Matrix& m, const Vector& r) {
  Matrix out(m.rows() + 1, r.size());
  if (m.rows() > 0) out.topRows(m.rows()) = m;
  out.row(m.rows()) = r.transpose();
  return out;
}

// Precomputed pieces of the stacked Gaussian for repeated quadratic forms.
struct StackedGaussian {
  Matrix inv;
  double log_norm = 0.0;  // -1/2 log|C| - Nd/2 log 2 pi
};

StackedGaussian stacked(const Matrix& cn, const Matrix& c_obs, Eigen::Index n_obs) {
  const Eigen::Index d = cn.rows();
  const Eigen::Index nd = d * n_obs;
  Matrix c(nd, nd);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index b = 0; b < d; ++b) {
      for (Eigen::Index k = 0; k < n_obs; ++k) {
        for (Eigen::Index l = 0; l < n_obs; ++l) c(a * n_obs + k, b * n_obs + l) = cn(a, b) + (k == l ? c_obs(a, b) : 0.0);
      }
    }
  }
  Eigen::FullPivLU<Matrix> lu(c);
  StackedGaussian g;
  g.inv = lu.inverse();
  double logdet = 0.0;
  const Matrix& u = lu.matrixLU();
  for (Eigen::Index i = 0; i < nd; ++i) logdet += std::log(std::abs(u(i, i)));
  g.log_norm = -0.5 * logdet - 0.5 * static_cast<double>(nd) * std::log(2.0 * M_PI);
  return g;
}

Vector stack_output_major(const Matrix& y) {
  Vector v(y.size());
  for (Eigen::Index a = 0; a < y.cols(); ++a) {
    for (Eigen::Index k = 0; k < y.rows(); ++k) v[a * y.rows() + k] = y(k, a);
  }
  return v;
}

}  // namespace

Matrix kernel_block(const gp::KernelSpec& spec, const Vector& x, const Vector& x2) {
  const Eigen::Index d = spec.output_dim();
  Matrix out = Matrix::Zero(d, d);
  for (Eigen::Index q = 0; q < spec.num_latent(); ++q) {
    const auto& lk = spec.latent[static_cast<std::size_t>(q)];
    const double c = lk.variance * corr(lk.family, x, x2, lk.lengthscales);
    for (Eigen::Index a = 0; a < d; ++a) {
      for (Eigen::Index b = 0; b < d; ++b) out(a, b) += c * spec.mixing(q, a) * spec.mixing(q, b);
    }
  }
  return out;
}

Matrix dense_gram(const gp::KernelSpec& spec, const Matrix& inputs, const Vector& scale, const std::vector<bool>& noisy) {
  const Eigen::Index n = inputs.rows();
  const Eigen::Index d = spec.output_dim();
  Matrix k(n * d, n * d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const Matrix b = kernel_block(spec, inputs.row(i).transpose(), inputs.row(j).transpose());
      for (Eigen::Index a = 0; a < d; ++a) {
        for (Eigen::Index c = 0; c < d; ++c) {
          double v = b(a, c);
          if (i == j && a == c && noisy[static_cast<std::size_t>(i)]) v += spec.nugget[a];
          k(i * d + a, j * d + c) = scale[a] * scale[c] * v;
        }
      }
    }
  }
  return k;
}

DensePosterior direct_predict(const gp::KernelSpec& spec, const Matrix& inputs, const Matrix& outputs,
                              const gp::OutputScaling& scaling, const Vector& x) {
  const Dense d = make_dense(spec, inputs, outputs, scaling, all_noisy(inputs.rows()));
  return {post_mean(d, scaling.shift, x), post_cross(d, x, x)};
}

Matrix direct_cross(const gp::KernelSpec& spec, const Matrix& inputs, const gp::OutputScaling& scaling,
                    const Vector& xs, const Vector& x) {
  const Dense d = make_dense(spec, inputs, Matrix(), scaling, all_noisy(inputs.rows()));
  return post_cross(d, xs, x);
}

Matrix reconditioned_cov(const gp::KernelSpec& spec, const Matrix& inputs, const gp::OutputScaling& scaling,
                         const Vector& xs, const Vector& x) {
  std::vector<bool> noisy = all_noisy(inputs.rows());
  noisy.push_back(false);
  const Dense d = make_dense(spec, append_row(inputs, x), Matrix(), scaling, noisy);
  return post_cross(d, xs, xs);
}

double dense_lml(const gp::KernelSpec& spec, const Matrix& inputs, const Matrix& outputs,
                 const gp::OutputScaling& scaling) {
  const Matrix k = dense_gram(spec, inputs, scaling.scale, all_noisy(inputs.rows()));
  const Dense d = make_dense(spec, inputs, outputs, scaling, all_noisy(inputs.rows()));
  Eigen::FullPivLU<Matrix> lu(k);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < k.rows(); ++i) logdet += std::log(std::abs(lu.matrixLU()(i, i)));
  return -0.5 * d.resid.dot(d.k_inv * d.resid) - 0.5 * logdet -
         0.5 * static_cast<double>(k.rows()) * std::log(2.0 * M_PI);
}

double kronecker_loglik(const Matrix& y, const Vector& mean, const Matrix& cn, const Matrix& c_obs) {
  const StackedGaussian g = stacked(cn, c_obs, y.rows());
  const Vector r = stack_output_major(y.rowwise() - mean.transpose());
  return g.log_norm - 0.5 * r.dot(g.inv * r);
}

double trapezoid(const std::function<double(double)>& f, double a, double b, int m) {
  const double h = (b - a) / (m - 1);
  double s = 0.5 * (f(a) + f(b));
  for (int i = 1; i < m - 1; ++i) s += f(a + i * h);
  return s * h;
}

std::vector<double> toy_posterior_grid(const ToyProblem& toy, int grid_points) {
  const Dense dn = make_dense(toy.spec, toy.inputs, toy.outputs, toy.scaling, all_noisy(toy.inputs.rows()));
  const double h = (toy.hi - toy.lo) / (grid_points - 1);
  std::vector<double> lik(static_cast<std::size_t>(grid_points));
  for (int g = 0; g < grid_points; ++g) {
    const Vector xg = Vector::Constant(1, toy.lo + g * h);
    lik[static_cast<std::size_t>(g)] =
        std::exp(kronecker_loglik(toy.y, post_mean(dn, toy.scaling.shift, xg), post_cross(dn, xg, xg), toy.c_obs));
  }
  double z = 0.0;
  for (int g = 0; g < grid_points; ++g) z += (g == 0 || g == grid_points - 1 ? 0.5 : 1.0) * lik[static_cast<std::size_t>(g)] * h;
  for (auto& v : lik) v /= z;
  return lik;
}

ToyEstimate toy_bruteforce(const ToyProblem& toy, const Vector& probes, int n_draws, int grid_points,
                               std::uint64_t seed) {
  if (toy.spec.output_dim() != 1 || toy.inputs.cols() != 1) throw ConfigError("the toy oracle is 1D / single output");
  const auto grid = static_cast<std::size_t>(grid_points);
  const double h = (toy.hi - toy.lo) / (grid_points - 1);
  const double prior = 1.0 / (toy.hi - toy.lo);
  std::vector<double> w(grid, h);
  w.front() = w.back() = 0.5 * h;
  std::vector<Vector> xg(grid);
  for (std::size_t g = 0; g < grid; ++g) xg[g] = Vector::Constant(1, toy.lo + static_cast<double>(g) * h);

  const Dense dn = make_dense(toy.spec, toy.inputs, toy.outputs, toy.scaling, all_noisy(toy.inputs.rows()));
  double z_n = 0.0;
  for (std::size_t g = 0; g < grid; ++g) {
    z_n += w[g] * prior *
           std::exp(kronecker_loglik(toy.y, post_mean(dn, toy.scaling.shift, xg[g]), post_cross(dn, xg[g], xg[g]), toy.c_obs));
  }

  const Eigen::Index n_obs = toy.y.rows();
  const Vector yflat = stack_output_major(toy.y);
  std::vector<bool> noisy = all_noisy(toy.inputs.rows());
  noisy.push_back(false);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  ToyEstimate out{Vector(probes.size()), Vector(probes.size())};
  for (Eigen::Index pi = 0; pi < probes.size(); ++pi) {
    const Vector x = Vector::Constant(1, probes[pi]);
    const double m_x = post_mean(dn, toy.scaling.shift, x)[0];
    const double sd_x = std::sqrt(std::max(post_cross(dn, x, x)(0, 0), 0.0));
    const Matrix aug = append_row(toy.inputs, x);
    // The conditioned mean is affine in the new output: evaluate it at z = 0 and z = 1.
    const Dense d0 = make_dense(toy.spec, aug, append_row(toy.outputs, Vector::Zero(1)), toy.scaling, noisy);
    const Dense d1 = make_dense(toy.spec, aug, append_row(toy.outputs, Vector::Ones(1)), toy.scaling, noisy);
    std::vector<double> m0(grid), slope(grid), det(grid);
    std::vector<StackedGaussian> gauss(grid);
    for (std::size_t g = 0; g < grid; ++g) {
      m0[g] = post_mean(d0, toy.scaling.shift, xg[g])[0];
      slope[g] = post_mean(d1, toy.scaling.shift, xg[g])[0] - m0[g];
      const Matrix c = post_cross(d0, xg[g], xg[g]);
      det[g] = std::max(c(0, 0), 0.0);
      gauss[g] = stacked(c, toy.c_obs, n_obs);
    }
    double sum = 0.0, sum2 = 0.0;
    std::vector<double> r(static_cast<std::size_t>(n_obs));
    for (int k = 0; k < n_draws; ++k) {
      const double z = m_x + sd_x * normal(rng);
      double dz = 0.0;
      for (std::size_t g = 0; g < grid; ++g) {
        const double mu = m0[g] + slope[g] * z;
        for (Eigen::Index i = 0; i < n_obs; ++i) r[static_cast<std::size_t>(i)] = yflat[i] - mu;
        double quad = 0.0;
        for (Eigen::Index i = 0; i < n_obs; ++i) {
          for (Eigen::Index j = 0; j < n_obs; ++j) {
            quad += r[static_cast<std::size_t>(i)] * gauss[g].inv(i, j) * r[static_cast<std::size_t>(j)];
          }
        }
        dz += w[g] * det[g] * prior * std::exp(gauss[g].log_norm - 0.5 * quad);
      }
      sum += dz;
      sum2 += dz * dz;
    }
    const double mean = sum / n_draws;
    const double var = std::max(sum2 / n_draws - mean * mean, 0.0) * n_draws / (n_draws - 1.0);
    out.value[pi] = mean / z_n;
    out.se[pi] = std::sqrt(var / n_draws) / z_n;
  }
  return out;
}

GridOptimum grid_argmax(const std::function<double(const Vector&)>& f, const Box& box, int m) {
  const Eigen::Index p = box.dim();
  GridOptimum best;
  best.value = -std::numeric_limits<double>::infinity();
  best.cell = box.width() / (m - 1);
  std::vector<int> idx(static_cast<std::size_t>(p), 0);
  Vector x(p);
  while (true) {
    for (Eigen::Index j = 0; j < p; ++j) x[j] = box.lower()[j] + idx[static_cast<std::size_t>(j)] * best.cell[j];
    const double v = f(x);
    if (v > best.value || best.x.size() == 0) {
      best.value = v;
      best.x = x;
    }
    Eigen::Index j = 0;
    while (j < p && ++idx[static_cast<std::size_t>(j)] == m) idx[static_cast<std::size_t>(j++)] = 0;
    if (j == p) break;
  }
  return best;
}

Vector point_model_expanded(const testbeds::PointModelParams& p, const testbeds::NuclearData& nd) {
  const double inv_rho = p.k_p / (p.k_p - 1.0);
  const double e = p.eps_F;
  const double denom = nd.nu_bar_s * (1.0 - p.x_s) + p.x_s;
  const double r = -e * p.S * nd.nu_bar_s * inv_rho / (nd.nu_bar * denom);
  const double y = e * nd.D2 * inv_rho * inv_rho - p.x_s * e * nd.nu_bar_s * nd.D2s * inv_rho / nd.nu_bar;
  const double x = 3.0 * e * e * nd.D2 * nd.D2 * std::pow(inv_rho, 4) -
                   3.0 * p.x_s * e * e * nd.D2 * nd.nu_bar_s * nd.D2s * std::pow(inv_rho, 3) / nd.nu_bar -
                   e * e * nd.D3 * std::pow(inv_rho, 3) +
                   p.x_s * e * e * nd.nu_bar_s * nd.nu_bar_s * nd.D3s * inv_rho * inv_rho / (nd.nu_bar * nd.nu_bar);
  return Vector{{r, y, x}};
}

testbeds::NuclearData frozen_nuclear_data() {
  testbeds::NuclearData nd;
  nd.nu_bar = 2.5;
  nd.D2 = 0.85;
  nd.D3 = 0.55;
  nd.nu_bar_s = 2.2;
  nd.D2s = 0.95;
  nd.D3s = 0.75;
  return nd;
}

std::vector<FrozenPointModel> frozen_point_model_values() {
  // Exact rational arithmetic, rounded to 20 significant digits.
  return {
      {{0.8, 0.05, 150000.0, 0.0}, Vector{{12000.0, 0.68, 1.4752}}},
      {{0.8, 0.05, 150000.0, 1.0}, Vector{{26400.0, 0.8472, 1.83952}}},
      {{0.7, 0.01, 100000.0, 0.1}, Vector{{987.17948717948717949, 0.048228444444444444444, 0.0074260407407407407407}}},
      {{0.9, 0.1, 200000.0, 0.9}, Vector{{141428.57142857142857, 7.56216, 160.629318}}},
      {{0.85, 0.06, 120000.0, 0.5}, Vector{{22440.0, 1.7797866666666666667, 9.1379488}}},
  };
}

}  // namespace seqdesign::oracles
