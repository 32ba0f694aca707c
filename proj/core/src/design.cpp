#include "seqdesign/design.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <type_traits>

#include <boost/random/sobol.hpp>
#include <json.hpp>

namespace seqdesign::design {

namespace {

constexpr double kTinyDet = 1e-300;

// Stack-allocated for the output dimensions seen in practice.
using Small = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 6, 6>;

template <typename M>
double small_psd_det(const M& m) {
  const M sym = 0.5 * (m + m.transpose());
  if (sym.rows() == 1) return std::max(sym(0, 0), 0.0);
  Eigen::LLT<M> llt(sym);
  if (llt.info() == Eigen::Success) {
    const double d = llt.matrixLLT().diagonal().prod();
    return d * d;
  }
  Eigen::SelfAdjointEigenSolver<M> eig(sym, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseMax(0.0).prod();
}

double elapsed_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

void DesignStrategy::validate() const {
  switch (kind) {
    case StrategyKind::csq:
      if (!(h > 0)) throw ConfigError("CSQ needs h > 0");
      break;
    case StrategyKind::ipsur:
      if (!(beta >= 0 && beta <= 1)) throw ConfigError("IP-SUR tempering beta must lie in [0, 1]");
      if (max_chain_samples < 0) throw ConfigError("max_chain_samples must be >= 0");
      break;
    case StrategyKind::iopt:
      if (m_int < 64) throw ConfigError("I-optimal design needs at least 64 integration nodes");
      break;
    case StrategyKind::dopt:
      break;
  }
  optim.validate();
}

std::string DesignStrategy::label() const {
  std::ostringstream os;
  switch (kind) {
    case StrategyKind::csq:
      os << "CSQ(h=" << h << ")";
      break;
    case StrategyKind::ipsur:
      os << "IPSUR";
      if (beta != 1.0) os << "(beta=" << beta << ")";
      break;
    case StrategyKind::dopt:
      os << "DOPT";
      break;
    case StrategyKind::iopt:
      os << "IOPT";
      break;
  }
  return os.str();
}

DesignStrategy DesignStrategy::ipsur(double beta) {
  DesignStrategy s;
  s.kind = StrategyKind::ipsur;
  s.beta = beta;
  return s;
}

DesignStrategy DesignStrategy::csq(double h) {
  DesignStrategy s;
  s.kind = StrategyKind::csq;
  s.h = h;
  return s;
}

DesignStrategy DesignStrategy::d_optimal() {
  DesignStrategy s;
  s.kind = StrategyKind::dopt;
  return s;
}

DesignStrategy DesignStrategy::i_optimal(int m_int) {
  DesignStrategy s;
  s.kind = StrategyKind::iopt;
  s.m_int = m_int;
  return s;
}

IntegratedCovarianceCriterion::IntegratedCovarianceCriterion(const gp::TrainedGP& gp, Matrix nodes, Vector weights)
    : gp_(gp), nodes_(std::move(nodes)), weights_(std::move(weights)) {
  const Eigen::Index m = nodes_.rows();
  const Eigen::Index d = gp_.output_dim();
  if (m == 0) throw ConfigError("integrated criterion needs at least one node (empty chain)");
  if (weights_.size() != m) throw ConfigError("one weight per node is required");
  if (nodes_.cols() != gp_.input_dim()) throw ConfigError("node dimension does not match the surrogate");
  if (d > 6) throw ConfigError("integrated criterion supports at most 6 outputs");
  const Eigen::Index nd = gp_.num_points() * d;
  whitened_.resize(nd, m * d);
  node_cov_.resize(d, m * d);
  node_det_.resize(static_cast<std::size_t>(m));
  const double det_scale = gp_.det_scale();
  for (const auto& lk : gp_.spec().latent) {
    Matrix sn = nodes_.transpose();
    sn.array().colwise() /= lk.lengthscales.array();
    scaled_nodes_.push_back(std::move(sn));
  }
  baseline_ = 0.0;
  for (Eigen::Index l = 0; l < m; ++l) {
    const Vector xl = nodes_.row(l).transpose();
    Matrix c = gp_.prior_block(xl, xl);
    if (nd > 0) {
      const Matrix w = gp_.whitened_cross(xl);
      whitened_.middleCols(l * d, d) = w;
      c.noalias() -= w.transpose() * w;
    }
    c = 0.5 * (c + c.transpose());
    node_cov_.middleCols(l * d, d) = c;
    node_det_[static_cast<std::size_t>(l)] = small_psd_det(Small(c)) * det_scale;
    baseline_ += weights_[l] * node_det_[static_cast<std::size_t>(l)];
  }
}

double IntegratedCovarianceCriterion::operator()(const Vector& x) const {
  const Eigen::Index d = gp_.output_dim();
  const Eigen::Index nd = gp_.num_points() * d;

  Matrix cx = gp_.prior_block(x, x);
  const double prior_trace = cx.trace();
  Matrix vx;
  Matrix g;  // d x (m d): vx^T W_l for every node
  if (nd > 0) {
    vx = gp_.whitened_cross(x);
    cx.noalias() -= vx.transpose() * vx;
    g.noalias() = vx.transpose() * whitened_;
  }
  const gp::QueryFactor factor(cx, prior_trace);
  if (factor.exhausted()) return baseline_;

  // C_n(x)^{-1} via the factor: reduction(I) = C^{-1} restricted to the identity cross.
  const Matrix cx_inv = factor.reduction(Matrix::Identity(d, d));
  switch (d) {
    case 1: return node_sum<1>(x, g, cx_inv);
    case 2: return node_sum<2>(x, g, cx_inv);
    case 3: return node_sum<3>(x, g, cx_inv);
    default: return node_sum<Eigen::Dynamic>(x, g, cx_inv);
  }
}

template <int D>
double IntegratedCovarianceCriterion::node_sum(const Vector& x, const Matrix& g, const Matrix& cx_inv) const {
  using Mat = std::conditional_t<D == Eigen::Dynamic, Small, Eigen::Matrix<double, D, D>>;
  const Eigen::Index d = gp_.output_dim();
  const Eigen::Index m = nodes_.rows();
  const bool has_data = gp_.num_points() > 0;
  const auto& spec = gp_.spec();
  const std::size_t q_count = spec.latent.size();

  // sigma_q^2 a_q a_q^T and x / l_q, reused for every node.
  std::vector<Mat> outer(q_count);
  std::vector<Vector> xs(q_count);
  for (std::size_t q = 0; q < q_count; ++q) {
    const auto& lk = spec.latent[q];
    const auto qi = static_cast<Eigen::Index>(q);
    outer[q] = lk.variance * spec.mixing.row(qi).transpose() * spec.mixing.row(qi);
    xs[q] = x.array() / lk.lengthscales.array();
  }
  const Mat inv = cx_inv;
  const double det_scale = gp_.det_scale();

  double total = 0.0;
  Mat cross(d, d);
  for (Eigen::Index l = 0; l < m; ++l) {
    cross.setZero();
    for (std::size_t q = 0; q < q_count; ++q) {
      const double r2 = (scaled_nodes_[q].col(l) - xs[q]).squaredNorm();
      cross.noalias() += correlation_r2(spec.latent[q].family, r2) * outer[q];
    }
    // C_n(node, x) = k(node, x) - W_l^T vx
    if (has_data) cross.noalias() -= g.middleCols(l * d, d).transpose();
    const Mat updated = Mat(node_cov_.middleCols(l * d, d)) - cross * inv * cross.transpose();
    total += weights_[l] * small_psd_det(updated) * det_scale;
  }
  return total;
}

Vector tempered_weights(const Vector& log_densities, double beta) {
  const Eigen::Index m = log_densities.size();
  if (m == 0) throw ConfigError("cannot weight an empty chain");
  if (beta == 1.0) return Vector::Constant(m, 1.0 / static_cast<double>(m));
  const Vector logw = (beta - 1.0) * log_densities;
  const double mx = logw.maxCoeff();
  Vector w = (logw.array() - mx).exp();
  return w / w.sum();
}

double ipsur_criterion(const gp::TrainedGP& gp, const mcmc::PosteriorChain& chain, const Vector& x, double beta,
                       Eigen::Index max_samples) {
  if (chain.size() == 0) throw ConfigError("IP-SUR criterion needs a non-empty chain");
  const mcmc::PosteriorChain nodes = chain.strided(max_samples);
  const IntegratedCovarianceCriterion crit(gp, nodes.samples, tempered_weights(nodes.log_densities, beta));
  return crit(x);
}

SelectionResult ipsur_select(const inverse::InverseProblem& ip, const mcmc::PosteriorChain& chain,
                             const DesignStrategy& strategy) {
  if (strategy.kind != StrategyKind::ipsur) throw ConfigError("ipsur_select needs an IPSUR strategy");
  strategy.validate();
  if (chain.size() == 0) throw ConfigError("IP-SUR selection needs a non-empty chain");
  const auto start = std::chrono::steady_clock::now();
  const mcmc::PosteriorChain nodes = chain.strided(strategy.max_chain_samples);
  const IntegratedCovarianceCriterion crit(ip.surrogate(), nodes.samples,
                                           tempered_weights(nodes.log_densities, strategy.beta));
  const optim::MinimizeResult r = optim::minimize([&](const Vector& x) { return crit(x); }, ip.box(), strategy.optim);
  SelectionResult out;
  out.strategy = strategy.label();
  out.x = r.x;
  out.criterion = r.f;
  out.evals = r.evals;
  out.degenerate = r.degenerate;
  out.cooling_constant = r.cooling_constant;
  out.stride = nodes.size() < chain.size() ? (chain.size() + nodes.size() - 1) / nodes.size() : 1;
  out.wall_seconds = elapsed_since(start);
  return out;
}

SelectionResult d_optimal_select(const gp::TrainedGP& gp, const Box& box, const optim::AnnealConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const optim::MinimizeResult r = optim::minimize(
      [&](const Vector& x) { return -std::log(std::max(psd_determinant(gp.predict(x).cov), kTinyDet)); }, box, cfg);
  SelectionResult out;
  out.strategy = "DOPT";
  out.x = r.x;
  out.criterion = std::exp(-r.f);
  out.evals = r.evals;
  out.degenerate = r.degenerate;
  out.cooling_constant = r.cooling_constant;
  out.wall_seconds = elapsed_since(start);
  return out;
}

SelectionResult csq_select(const inverse::InverseProblem& ip, const DesignStrategy& strategy) {
  if (strategy.kind != StrategyKind::csq) throw ConfigError("csq_select needs a CSQ strategy");
  strategy.validate();
  const auto start = std::chrono::steady_clock::now();
  const inverse::MapEstimate map = inverse::find_map(ip, strategy.optim);
  const gp::TrainedGP& gp = ip.surrogate();
  SelectionResult out;
  if (std::isinf(strategy.h)) {
    out = d_optimal_select(gp, ip.box(), strategy.optim);
  } else {
    const double h = strategy.h;
    const optim::MinimizeResult r = optim::minimize(
        [&](const Vector& x) {
          const double gap = map.log_posterior - ip.log_posterior(x);
          const double logdet = std::log(std::max(psd_determinant(gp.predict(x).cov), kTinyDet));
          return -logdet + 1e6 * std::max(0.0, gap - h);
        },
        ip.box(), strategy.optim);
    out.x = r.x;
    out.evals = r.evals;
    out.degenerate = r.degenerate;
    out.cooling_constant = r.cooling_constant;
    // The MAP itself is always feasible.
    if (map.log_posterior - ip.log_posterior(out.x) > h + 1e-6) out.x = map.x;
    out.criterion = psd_determinant(gp.predict(out.x).cov);
  }
  out.strategy = strategy.label();
  out.evals += map.evals;
  out.map = map.x;
  out.wall_seconds = elapsed_since(start);
  return out;
}

Matrix sobol_nodes(const Box& box, int m) {
  if (m < 1) throw ConfigError("need at least one Sobol node");
  const auto p = static_cast<std::size_t>(box.dim());
  boost::random::sobol gen(p);
  const double denom = static_cast<double>(gen.max()) + 1.0;
  Matrix out(m, box.dim());
  Vector u(box.dim());
  for (int i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < box.dim(); ++j) u[j] = static_cast<double>(gen()) / denom;
    out.row(i) = box.from_unit(u).transpose();
  }
  return out;
}

SelectionResult i_optimal_select(const gp::TrainedGP& gp, const Box& box, const optim::AnnealConfig& cfg, int m_int) {
  if (m_int < 1) throw ConfigError("I-optimal design needs integration nodes");
  const auto start = std::chrono::steady_clock::now();
  const IntegratedCovarianceCriterion crit(gp, sobol_nodes(box, m_int),
                                           Vector::Constant(m_int, 1.0 / static_cast<double>(m_int)));
  const optim::MinimizeResult r = optim::minimize([&](const Vector& x) { return crit(x); }, box, cfg);
  SelectionResult out;
  out.strategy = "IOPT";
  out.x = r.x;
  out.criterion = r.f;
  out.evals = r.evals;
  out.degenerate = r.degenerate;
  out.cooling_constant = r.cooling_constant;
  out.wall_seconds = elapsed_since(start);
  return out;
}

SelectionResult select_next(const DesignStrategy& strategy, const inverse::InverseProblem& ip,
                            const mcmc::PosteriorChain& chain) {
  strategy.validate();
  switch (strategy.kind) {
    case StrategyKind::ipsur:
      return ipsur_select(ip, chain, strategy);
    case StrategyKind::csq:
      return csq_select(ip, strategy);
    case StrategyKind::dopt: {
      auto r = d_optimal_select(ip.surrogate(), ip.box(), strategy.optim);
      r.strategy = strategy.label();
      return r;
    }
    case StrategyKind::iopt: {
      auto r = i_optimal_select(ip.surrogate(), ip.box(), strategy.optim, strategy.m_int);
      r.strategy = strategy.label();
      return r;
    }
  }
  throw ConfigError("unknown strategy kind");
}

std::string selection_record_json(const SelectionResult& r, int iteration) {
  nlohmann::json j{
      {"strategy", r.strategy},
      {"iteration", iteration},
      {"x", std::vector<double>(r.x.data(), r.x.data() + r.x.size())},
      {"criterion", r.criterion},
      {"evals", r.evals},
      {"wall_time_s", r.wall_seconds},
  };
  if (r.stride > 1) j["chain_stride"] = r.stride;
  if (r.degenerate) j["degenerate"] = true;
  return j.dump();
}

}  // namespace seqdesign::design
