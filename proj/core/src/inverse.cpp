#include "seqdesign/inverse.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace seqdesign::inverse {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

ObservationSet ObservationSet::make(Matrix y, Matrix c_obs) {
  if (y.rows() < 1) throw ConfigError("observation set needs at least one observation");
  if (c_obs.rows() != y.cols() || c_obs.cols() != y.cols()) throw ConfigError("c_obs must be d x d");
  if (!y.allFinite() || !c_obs.allFinite()) throw ConfigError("observations must be finite");
  if ((c_obs - c_obs.transpose()).cwiseAbs().maxCoeff() > 1e-12 * c_obs.cwiseAbs().maxCoeff()) {
    throw ConfigError("c_obs must be symmetric");
  }
  Eigen::LLT<Matrix> llt(c_obs);
  if (llt.info() != Eigen::Success || min_eigenvalue(c_obs) <= 0) {
    throw ConfigError("c_obs must be strictly positive definite");
  }
  ObservationSet out;
  out.y_bar = y.colwise().mean().transpose();
  out.y = std::move(y);
  out.c_obs = 0.5 * (c_obs + c_obs.transpose());
  return out;
}

InverseProblem::InverseProblem(ObservationSet obs, std::shared_ptr<const gp::TrainedGP> surrogate, Box prior_box)
    : obs_(std::move(obs)), gp_(std::move(surrogate)), box_(std::move(prior_box)) {
  if (!gp_) throw ConfigError("inverse problem needs a surrogate");
  if (gp_->output_dim() != obs_.dim()) throw ConfigError("surrogate output dimension differs from observations");
  if (gp_->input_dim() != box_.dim()) throw ConfigError("surrogate input dimension differs from prior box");
  c_obs_over_n_ = obs_.c_obs / static_cast<double>(obs_.count());
}

InverseProblem InverseProblem::with_surrogate(std::shared_ptr<const gp::TrainedGP> surrogate) const {
  return {obs_, std::move(surrogate), box_};
}

Matrix InverseProblem::effective_cov(const Vector& x) const { return gp_->predict(x).cov + c_obs_over_n_; }

double InverseProblem::log_likelihood(const Vector& x) const {
  const gp::Prediction pred = gp_->predict(x);
  const Matrix ceff = pred.cov + c_obs_over_n_;
  Eigen::LLT<Matrix> llt(ceff);
  if (llt.info() != Eigen::Success) throw NumericalError("effective covariance is not positive definite");
  const Vector r = obs_.y_bar - pred.mean;
  const Vector w = llt.matrixL().solve(r);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * log_det - 0.5 * w.squaredNorm();
}

double InverseProblem::log_likelihood_full(const Vector& x) const {
  const Eigen::Index n_obs = obs_.count();
  const Eigen::Index d = obs_.dim();
  const Eigen::Index size = n_obs * d;
  if (size > 200) throw ConfigError("full Kronecker likelihood is limited to N*d <= 200");
  const gp::Prediction pred = gp_->predict(x);
  // Index a*N + k: output a of observation k.
  Matrix ctot(size, size);
  Vector resid(size);
  for (Eigen::Index a = 0; a < d; ++a) {
    for (Eigen::Index k = 0; k < n_obs; ++k) {
      resid[a * n_obs + k] = obs_.y(k, a) - pred.mean[a];
      for (Eigen::Index b = 0; b < d; ++b) {
        for (Eigen::Index l = 0; l < n_obs; ++l) {
          ctot(a * n_obs + k, b * n_obs + l) = pred.cov(a, b) + (k == l ? obs_.c_obs(a, b) : 0.0);
        }
      }
    }
  }
  Eigen::LLT<Matrix> llt(ctot);
  if (llt.info() != Eigen::Success) throw NumericalError("total covariance is not positive definite");
  const Vector w = llt.matrixL().solve(resid);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return -0.5 * static_cast<double>(size) * std::log(2.0 * M_PI) - 0.5 * log_det - 0.5 * w.squaredNorm();
}

double InverseProblem::log_prior(const Vector& x) const {
  return box_.contains(x) ? -box_.log_volume() : kNegInf;
}

double InverseProblem::log_posterior(const Vector& x) const {
  if (!box_.contains(x)) return kNegInf;
  return log_likelihood(x) - box_.log_volume();
}

MapEstimate find_map(const InverseProblem& ip, const optim::AnnealConfig& cfg) {
  if (cfg.max_evals < 100) throw ConfigError("MAP search needs a budget of at least 100 evaluations");
  const optim::MinimizeResult r =
      optim::minimize([&](const Vector& x) { return -ip.log_posterior(x); }, ip.box(), cfg);
  return {r.x, -r.f, r.evals};
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

ObservationFile load_observations(const std::string& csv_path, const std::string& sidecar_path) {
  std::ifstream csv(csv_path);
  if (!csv) throw ConfigError("cannot read " + csv_path);
  std::string line;
  if (!std::getline(csv, line)) throw ConfigError("observation CSV is empty");
  const auto header = split_csv(line);
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (header[j] != "y" + std::to_string(j + 1)) throw ConfigError("observation CSV header must be y1..yd");
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(csv, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw ConfigError("observation row has wrong number of columns");
    std::vector<double> row;
    for (const auto& c : cells) {
      row.push_back(parse_number(c, "observation value"));
    }
    rows.push_back(std::move(row));
  }
  const auto d = static_cast<Eigen::Index>(header.size());
  Matrix y(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Eigen::Index j = 0; j < d; ++j) y(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }

  std::ifstream side(sidecar_path);
  if (!side) throw ConfigError("cannot read " + sidecar_path);
  nlohmann::json doc;
  try {
    side >> doc;
    const auto c = doc.at("c_obs").get<std::vector<std::vector<double>>>();
    Matrix c_obs(static_cast<Eigen::Index>(c.size()), d);
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (static_cast<Eigen::Index>(c[i].size()) != d) throw ConfigError("c_obs must be d x d");
      for (Eigen::Index j = 0; j < d; ++j) c_obs(static_cast<Eigen::Index>(i), j) = c[i][static_cast<std::size_t>(j)];
    }
    const auto lo = doc.at("box").at("lower").get<std::vector<double>>();
    const auto hi = doc.at("box").at("upper").get<std::vector<double>>();
    Box box(Eigen::Map<const Vector>(lo.data(), static_cast<Eigen::Index>(lo.size())),
            Eigen::Map<const Vector>(hi.data(), static_cast<Eigen::Index>(hi.size())));
    return {ObservationSet::make(std::move(y), std::move(c_obs)), std::move(box)};
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed observation sidecar: ") + e.what());
  }
}

void save_observations(const ObservationSet& obs, const Box& box, const std::string& csv_path,
                       const std::string& sidecar_path) {
  std::ofstream csv(csv_path);
  if (!csv) throw ConfigError("cannot write " + csv_path);
  csv << std::setprecision(17);
  for (Eigen::Index j = 0; j < obs.dim(); ++j) csv << (j ? "," : "") << "y" << j + 1;
  csv << '\n';
  for (Eigen::Index i = 0; i < obs.count(); ++i) {
    for (Eigen::Index j = 0; j < obs.dim(); ++j) csv << (j ? "," : "") << obs.y(i, j);
    csv << '\n';
  }
  nlohmann::json doc;
  std::vector<std::vector<double>> c(static_cast<std::size_t>(obs.dim()));
  for (Eigen::Index i = 0; i < obs.dim(); ++i) {
    for (Eigen::Index j = 0; j < obs.dim(); ++j) c[static_cast<std::size_t>(i)].push_back(obs.c_obs(i, j));
  }
  doc["c_obs"] = c;
  doc["box"]["lower"] = std::vector<double>(box.lower().data(), box.lower().data() + box.dim());
  doc["box"]["upper"] = std::vector<double>(box.upper().data(), box.upper().data() + box.dim());
  std::ofstream side(sidecar_path);
  if (!side) throw ConfigError("cannot write " + sidecar_path);
  side << doc.dump(2) << '\n';
}

}  // namespace seqdesign::inverse
