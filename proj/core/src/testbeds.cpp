#include "seqdesign/testbeds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace seqdesign::testbeds {

Matrix DirectModel::eval_rows(const Matrix& x) const {
  Matrix out(x.rows(), output_dim);
  for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = eval(x.row(i).transpose()).transpose();
  return out;
}

Vector banana(const Vector& x) {
  if (x.size() != 2) throw ConfigError("banana takes two inputs");
  return Vector{{x[0], x[1] + 0.03 * x[0] * x[0]}};
}

Vector bimodal(const Vector& x) {
  if (x.size() != 2) throw ConfigError("bimodal takes two inputs");
  return Vector{{x[1] - x[0] * x[0], x[1] - x[0]}};
}

void NuclearData::validate() const {
  for (double v : {nu_bar, D2, D3, nu_bar_s, D2s, D3s}) {
    if (!(v > 0) || !std::isfinite(v)) throw ConfigError("nuclear data must be strictly positive");
  }
}

PointModelParams PointModelParams::from_vector(const Vector& x) {
  if (x.size() != 4) throw ConfigError("point model takes (k_p, eps_F, S, x_s)");
  return {x[0], x[1], x[2], x[3]};
}

Vector point_model(const PointModelParams& params, const NuclearData& nd) {
  if (!(params.k_p > 0 && params.k_p < 1)) throw ConfigError("point model requires 0 < k_p < 1");
  const double rho = params.rho();
  const double eps = params.eps_F;
  const double xs = params.x_s;
  const double r = -eps * params.S * nd.nu_bar_s / (rho * nd.nu_bar * (nd.nu_bar_s + xs - nd.nu_bar_s * xs));
  const double y_lead = eps * nd.D2 / (rho * rho);
  const double y_corr = 1.0 - xs * rho * nd.nu_bar_s * nd.D2s / (nd.nu_bar * nd.D2);
  const double x_corr = 1.0 - xs * rho * nd.nu_bar_s * nd.nu_bar_s * nd.D3s / (nd.nu_bar * nd.nu_bar * nd.D3);
  const double y_inf = y_lead * y_corr;
  const double x_inf = 3.0 * y_lead * y_lead * y_corr - eps * eps * nd.D3 / (rho * rho * rho) * x_corr;
  return Vector{{r, y_inf, x_inf}};
}

DirectModel make_banana() {
  return {"banana", Box(Vector{{-20.0, -10.0}}, Vector{{20.0, 10.0}}), 2, banana};
}

DirectModel make_bimodal() {
  return {"bimodal", Box(Vector{{-6.0, -4.0}}, Vector{{6.0, 8.0}}), 2, bimodal};
}

DirectModel make_point_model(const NuclearData& nd) {
  nd.validate();
  return {"neutron", Box(Vector{{0.7, 0.01, 1e5, 0.1}}, Vector{{0.9, 0.10, 2e5, 0.9}}), 3,
          [nd](const Vector& x) { return point_model(PointModelParams::from_vector(x), nd); }};
}

DirectModel make_testbed(const std::string& name, const NuclearData& nd) {
  if (name == "banana") return make_banana();
  if (name == "bimodal") return make_bimodal();
  if (name == "neutron") return make_point_model(nd);
  throw ConfigError("unknown test bed: " + name);
}

std::vector<std::string> testbed_names() { return {"banana", "bimodal", "neutron"}; }

inverse::ObservationSet make_observations(const Vector& center, const Matrix& c_obs, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("need at least one observation");
  if (c_obs.rows() != center.size() || c_obs.cols() != center.size()) throw ConfigError("c_obs shape mismatch");
  const Eigen::LLT<Matrix> llt(0.5 * (c_obs + c_obs.transpose()));
  if (llt.info() != Eigen::Success) throw ConfigError("c_obs is not positive definite");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix y(n, center.size());
  Vector e(center.size());
  for (int k = 0; k < n; ++k) {
    for (Eigen::Index j = 0; j < e.size(); ++j) e[j] = normal(rng);
    y.row(k) = (center + llt.matrixL() * e).transpose();
  }
  return inverse::ObservationSet::make(std::move(y), c_obs);
}

inverse::ObservationSet make_observations(const DirectModel& model, const Vector& x_th, const Matrix& c_obs, int n,
                                          std::uint64_t seed) {
  if (!model.box.contains(x_th)) throw ConfigError("x_th lies outside the box");
  return make_observations(model.eval(x_th), c_obs, n, seed);
}

ObservationSetup default_observation_setup(const DirectModel& model) {
  if (model.name == "banana") return {Vector{{0.0, 3.0}}, Vector{{100.0, 1.0}}.asDiagonal(), 5};
  if (model.name == "bimodal") {
    return {Vector{{0.0, 2.0}}, Vector{{5.0 / std::sqrt(0.2), 5.0 / std::sqrt(0.75)}}.asDiagonal(), 10};
  }
  if (model.name == "neutron") {
    const Vector f = model.eval(model.box.center());
    const Vector sd = 0.05 * f.cwiseAbs();
    return {f, Matrix(sd.cwiseProduct(sd).asDiagonal()), 20};
  }
  throw ConfigError("no default observations for " + model.name);
}

Matrix initial_design(const Box& box, int n0, std::uint64_t seed) {
  if (n0 < 2) throw ConfigError("initial design needs n0 >= 2");
  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Eigen::Index p = box.dim();
  Matrix u(n0, p);
  std::vector<int> perm(static_cast<std::size_t>(n0));
  for (Eigen::Index j = 0; j < p; ++j) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < n0; ++i) u(i, j) = (perm[static_cast<std::size_t>(i)] + unif(rng)) / n0;
  }
  Matrix x(n0, p);
  for (int i = 0; i < n0; ++i) x.row(i) = box.from_unit(u.row(i).transpose()).transpose();
  return x;
}

}  // namespace seqdesign::testbeds
