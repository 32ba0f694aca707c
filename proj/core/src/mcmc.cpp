#include "seqdesign/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace seqdesign::mcmc {

PosteriorChain PosteriorChain::strided(Eigen::Index m) const {
  if (m <= 0 || m >= size()) return *this;
  PosteriorChain out;
  out.samples.resize(m, dim());
  out.log_densities.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::Index src = i * size() / m;
    out.samples.row(i) = samples.row(src);
    out.log_densities[i] = log_densities[src];
  }
  out.acceptance_rate = acceptance_rate;
  out.burn_in = burn_in;
  return out;
}

PosteriorChain adaptive_metropolis(const LogDensity& logpdf, const Box& box, const Vector& init,
                                   const AdaptiveMetropolisConfig& cfg) {
  const Eigen::Index p = box.dim();
  if (cfg.length < 1000) throw ConfigError("adaptive Metropolis needs at least 1000 iterations");
  if (init.size() != p || !box.contains(init)) throw ConfigError("chain initialization must lie inside the box");
  double current_lp = logpdf(init);
  if (!std::isfinite(current_lp)) throw NumericalError("invalid chain start: log-density is not finite at init");

  Rng rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const double sp = 2.38 * 2.38 / static_cast<double>(p);
  // Work in unit coordinates so that epsilon is scale-free.
  Vector u = box.to_unit(init);
  Vector mean = u;
  Matrix m2 = Matrix::Zero(p, p);  // running sum of outer deviations (Welford)
  Matrix chol = Matrix::Identity(p, p) * cfg.initial_scale;

  const int burn = static_cast<int>(std::floor(cfg.burn_in_fraction * cfg.length));
  PosteriorChain chain;
  chain.burn_in = burn;
  chain.samples.resize(cfg.length - burn, p);
  chain.log_densities.resize(cfg.length - burn);

  long accepted = 0;
  long consecutive_rejections = 0;
  const long stuck_limit = 10L * p * 1000L;
  Vector z(p);
  for (int t = 0; t < cfg.length; ++t) {
    for (Eigen::Index i = 0; i < p; ++i) z[i] = normal(rng);
    const Vector prop_u = u + chol * z;
    const double draw = unif(rng);
    bool accept = false;
    if ((prop_u.array() >= 0.0).all() && (prop_u.array() <= 1.0).all()) {
      const Vector prop_x = box.from_unit(prop_u);
      const double lp = logpdf(prop_x);
      if (!std::isnan(lp) && lp > -std::numeric_limits<double>::infinity() &&
          (lp >= current_lp || draw < std::exp(lp - current_lp))) {
        u = prop_u;
        current_lp = lp;
        accept = true;
      }
    }
    if (accept) {
      ++accepted;
      consecutive_rejections = 0;
    } else if (++consecutive_rejections >= stuck_limit) {
      std::ostringstream msg;
      msg << "stuck chain: " << consecutive_rejections << " consecutive rejections at iteration " << t
          << ", acceptance rate so far " << static_cast<double>(accepted) / (t + 1) << ", log-density "
          << current_lp;
      throw StuckChainError(msg.str());
    }

    // Welford update of the history mean/covariance (history includes the current state).
    const double count = static_cast<double>(t + 2);
    const Vector delta = u - mean;
    mean += delta / count;
    m2.noalias() += delta * (u - mean).transpose();

    if (t + 1 >= cfg.adapt_start) {
      Matrix cov = m2 / (count - 1.0);
      cov = 0.5 * (cov + cov.transpose());
      cov.diagonal().array() += cfg.epsilon;
      Eigen::LLT<Matrix> llt(sp * cov);
      if (llt.info() == Eigen::Success) chol = llt.matrixL();
    }

    if (t >= burn) {
      chain.samples.row(t - burn) = box.from_unit(u).transpose();
      chain.log_densities[t - burn] = current_lp;
    }
  }
  chain.acceptance_rate = static_cast<double>(accepted) / cfg.length;
  return chain;
}

IatEstimate estimate_iat(const Matrix& samples) {
  const Eigen::Index n = samples.rows();
  const Eigen::Index p = samples.cols();
  IatEstimate out;
  out.tau = Vector::Constant(p, std::numeric_limits<double>::quiet_NaN());
  out.defined.assign(static_cast<std::size_t>(p), false);
  if (n < 4) return out;
  for (Eigen::Index j = 0; j < p; ++j) {
    const Vector x = samples.col(j).array() - samples.col(j).mean();
    const double c0 = x.squaredNorm() / static_cast<double>(n);
    if (!(c0 > 1e-300 * std::max(1.0, samples.col(j).cwiseAbs().maxCoeff()))) continue;
    auto autocorr = [&](Eigen::Index lag) {
      return x.head(n - lag).dot(x.tail(n - lag)) / (static_cast<double>(n) * c0);
    };
    // Sum of positive pair sums Gamma_k = rho_{2k} + rho_{2k+1}.
    double sum = 0.0;
    for (Eigen::Index k = 0; 2 * k + 1 < n; ++k) {
      const double gamma = autocorr(2 * k) + autocorr(2 * k + 1);
      if (gamma <= 0) break;
      sum += gamma;
    }
    out.tau[j] = std::max(1.0, 2.0 * sum - 1.0);
    out.defined[static_cast<std::size_t>(j)] = true;
  }
  return out;
}

void save_chain_csv(const PosteriorChain& chain, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << std::setprecision(17);
  for (Eigen::Index j = 0; j < chain.dim(); ++j) out << "x" << j + 1 << ',';
  out << "logpdf\n";
  for (Eigen::Index i = 0; i < chain.size(); ++i) {
    for (Eigen::Index j = 0; j < chain.dim(); ++j) out << chain.samples(i, j) << ',';
    out << chain.log_densities[i] << '\n';
  }
}

PosteriorChain load_chain_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("chain CSV is empty");
  const auto cols = static_cast<Eigen::Index>(std::count(line.begin(), line.end(), ',') + 1);
  if (cols < 2) throw ConfigError("chain CSV needs x1..xp,logpdf columns");
  std::vector<double> values;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Eigen::Index c = 0;
    while (std::getline(ss, cell, ',')) {
      values.push_back(parse_number(cell, "chain value"));
      ++c;
    }
    if (c != cols) throw ConfigError("chain CSV row has wrong number of columns");
    ++rows;
  }
  PosteriorChain chain;
  chain.samples.resize(rows, cols - 1);
  chain.log_densities.resize(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols - 1; ++j) chain.samples(i, j) = values[static_cast<std::size_t>(i * cols + j)];
    chain.log_densities[i] = values[static_cast<std::size_t>(i * cols + cols - 1)];
  }
  return chain;
}

}  // namespace seqdesign::mcmc
