// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.
//
//   seqdesign_acceptance [--workdir DIR] [--only 1,2,5] [--resume]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "oracles.hpp"
#include "seqdesign/harness.hpp"
#include "seqdesign/mcmc.hpp"
#include "seqdesign/metrics.hpp"

namespace fs = std::filesystem;
using namespace seqdesign;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string sci(double v, int prec = 2) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(prec) << v;
  return os.str();
}

std::string fixed(double v, int prec = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

Vector random_point(Rng& rng, Eigen::Index p) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Vector x(p);
  for (Eigen::Index k = 0; k < p; ++k) x[k] = u(rng);
  return x;
}

// 1. Closed-form criterion against brute-force expectation on the 1D toy.
Outcome criterion1() {
  const auto cmp = oracles::criterion_comparison(20240601);
  const Vector z = cmp.z_scores();
  Outcome o;
  o.pass = (z.array() <= 3.0).all();
  o.detail = "max z = " + fixed(z.maxCoeff(), 2) + " over " + std::to_string(z.size()) + " probes (tol 3 SE)";
  return o;
}

// 2. Determinant monotonicity under one more observation.
Outcome criterion2() {
  Rng rng(2002);
  double worst = -1e300;
  int violations = 0;
  for (int t = 0; t < 200; ++t) {
    const auto p = static_cast<Eigen::Index>(1 + t % 4);
    const auto d = static_cast<Eigen::Index>(1 + t % 3);
    const auto inst = oracles::random_instance(rng, p, d, 2 + t % 11);
    const gp::TrainedGP g = gp::condition(inst.spec, inst.inputs, inst.outputs);
    const Vector xs = random_point(rng, p), x = random_point(rng, p);
    const double gap = psd_determinant(g.updated_cov(xs, x)) - psd_determinant(g.predict(xs).cov);
    worst = std::max(worst, gap);
    if (gap > 1e-12) ++violations;
  }
  return {violations == 0, "200 instances, max |C_n+1| - |C_n| = " + sci(worst) + ", violations " +
                               std::to_string(violations)};
}

// 3. Kronecker-form likelihood proportional to the effective-covariance form.
Outcome criterion3() {
  Outcome o{true, ""};
  for (const auto& name : testbeds::testbed_names()) {
    const auto model = testbeds::make_testbed(name);
    const auto setup = testbeds::default_observation_setup(model);
    const auto obs = testbeds::make_observations(setup.center, setup.c_obs, setup.n, 33);
    const Matrix x = testbeds::initial_design(model.box, 15, 31);
    const Matrix z = model.eval_rows(x);
    const auto spec = gp::KernelSpec::make_default(gp::KernelFamily::matern52, 0.3 * model.box.width(),
                                                   model.output_dim, 1.0, 1e-6);
    const inverse::InverseProblem ip(obs, std::make_shared<const gp::TrainedGP>(gp::condition(spec, x, z)), model.box);
    Rng rng(34);
    double lo = 1e300, hi = -1e300;
    for (int t = 0; t < 20; ++t) {
      const Vector xt = model.box.sample_uniform(rng);
      const double ratio = std::exp(ip.log_likelihood_full(xt) - ip.log_likelihood(xt));
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    const double spread = (hi - lo) / hi;
    const bool ok = spread <= 1e-6 && obs.count() * obs.dim() <= 60;
    o.pass = o.pass && ok;
    o.detail += name + " (Nd=" + std::to_string(obs.count() * obs.dim()) + ") spread " + sci(spread) + "; ";
  }
  o.detail += "tol 1e-6";
  return o;
}

// 4. Fast covariance update against batch re-conditioning.
Outcome criterion4() {
  Rng rng(4004);
  double worst = 0.0;
  for (int t = 0; t < 50; ++t) {
    const auto p = static_cast<Eigen::Index>(1 + t % 4);
    const auto d = static_cast<Eigen::Index>(1 + (t / 4) % 3);
    const auto n = static_cast<Eigen::Index>(1 + t % 12);
    const auto inst = oracles::random_instance(rng, p, d, n);
    const gp::TrainedGP g = gp::condition(inst.spec, inst.inputs, inst.outputs);
    const Vector xs = random_point(rng, p), x = random_point(rng, p);
    const Matrix ref = oracles::reconditioned_cov(inst.spec, inst.inputs, g.scaling(), xs, x);
    worst = std::max(worst, max_abs(g.updated_cov(xs, x) - ref));
  }
  return {worst <= 1e-7, "50 instances, max elementwise error " + sci(worst) + " (tol 1e-7)"};
}

// Shared banana campaign for criteria 5 and 6.
struct Campaign {
  std::map<std::string, std::vector<double>> mean_ivar;  // strategy -> mean IVAR per iteration
  std::map<std::string, std::vector<std::vector<double>>> ivar_by_iteration;
  int failed_rows = 0;
  double seconds = 0.0;
  bool ran = false;
};

Campaign run_banana_campaign(const std::string& workdir, bool resume) {
  const std::string out = (fs::path(workdir) / "banana").string();
  if (!resume) fs::remove_all(out);
  nlohmann::json j{
      {"testbed", "banana"},
      {"strategies", {"IPSUR", {{"kind", "CSQ"}, {"h", 3}}, "DOPT", {{"kind", "CSQ"}, {"h", 1}}}},
      {"n0", 10},
      {"n_iterations", 20},
      {"n_replicates", 10},
      {"chain_length", 20000},
      {"seed", 2024},
      {"output_dir", out},
      {"reference_points", 0},
      {"kde_metrics", false},
  };
  const auto start = std::chrono::steady_clock::now();
  const auto summary = harness::run_experiment(harness::parse_config(j.dump()));
  Campaign c;
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  c.ran = true;
  const auto rows = harness::read_record(summary.record_path);
  for (const auto& r : rows) {
    c.failed_rows += r.status != "ok";
    if (r.status != "ok") continue;
    auto& per = c.ivar_by_iteration[r.strategy];
    if (static_cast<int>(per.size()) <= r.iteration) per.resize(static_cast<std::size_t>(r.iteration) + 1);
    per[static_cast<std::size_t>(r.iteration)].push_back(r.ivar);
  }
  const auto stats = harness::summarize(rows);
  harness::write_summary(stats, (fs::path(out) / "summary.csv").string());
  for (const auto& s : stats) {
    if (s.metric != "ivar") continue;
    auto& v = c.mean_ivar[s.strategy];
    if (static_cast<int>(v.size()) <= s.iteration) v.resize(static_cast<std::size_t>(s.iteration) + 1, NAN);
    v[static_cast<std::size_t>(s.iteration)] = s.mean;
  }
  return c;
}

double final_of(const Campaign& c, const std::string& strategy) {
  const auto it = c.mean_ivar.find(strategy);
  return it == c.mean_ivar.end() || it->second.size() != 21 ? NAN : it->second.back();
}

int non_monotone_steps(const std::vector<double>& v) {
  int n = 0;
  for (std::size_t k = 1; k < v.size(); ++k) n += v[k] > v[k - 1];
  return n;
}

double median(std::vector<double> v) {
  if (v.empty()) return NAN;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

Outcome criterion5(const Campaign& c) {
  const double ip = final_of(c, "IPSUR"), dopt = final_of(c, "DOPT"), csq3 = final_of(c, "CSQ(h=3)");
  const auto it = c.mean_ivar.find("IPSUR");
  const int non_monotone = it == c.mean_ivar.end() ? 99 : non_monotone_steps(it->second);
  // Reported only: the median path is insensitive to single-replicate excursions.
  std::vector<double> medians;
  if (const auto m = c.ivar_by_iteration.find("IPSUR"); m != c.ivar_by_iteration.end()) {
    for (const auto& v : m->second) medians.push_back(median(v));
  }
  const bool ok = c.failed_rows == 0 && ip < dopt && csq3 < dopt && non_monotone <= 2 && c.seconds <= 30 * 60;
  return {ok, "final mean IVAR IPSUR " + sci(ip) + ", CSQ(h=3) " + sci(csq3) + ", DOPT " + sci(dopt) +
                  "; IPSUR mean-path non-monotone steps " + std::to_string(non_monotone) +
                  " (max 2; median path " + std::to_string(non_monotone_steps(medians)) + ", not asserted); failed rows " +
                  std::to_string(c.failed_rows) + "; " + fixed(c.seconds / 60, 1) + " min"};
}

Outcome criterion6(const Campaign& c) {
  const double h1 = final_of(c, "CSQ(h=1)"), h3 = final_of(c, "CSQ(h=3)");
  return {h1 >= h3 && c.seconds <= 45 * 60,
          "final mean IVAR CSQ(h=1) " + sci(h1) + " vs CSQ(h=3) " + sci(h3) + " (same campaign)"};
}

// 7. Sampler and IAT calibration.
Outcome criterion7() {
  const Vector mu = Vector::Zero(2);
  const Matrix sigma = Matrix::Identity(2, 2);
  const Eigen::LLT<Matrix> llt(sigma);
  mcmc::AdaptiveMetropolisConfig cfg;
  cfg.length = 50000;
  cfg.seed = 7;
  const Box box(Vector::Constant(2, -8.0), Vector::Constant(2, 8.0));
  const auto chain = mcmc::adaptive_metropolis(
      [&](const Vector& x) { return -0.5 * (llt.matrixL().solve(x - mu)).squaredNorm(); }, box, Vector::Zero(2), cfg);
  const Vector mean = chain.samples.colwise().mean();
  const Matrix centered = chain.samples.rowwise() - mean.transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(chain.size() - 1);
  const double mean_err = (mean - mu).cwiseAbs().maxCoeff();
  const double cov_err = (cov - sigma).norm();

  Rng rng(77);
  std::normal_distribution<double> g(0.0, 1.0);
  const double phi = 0.9;
  Matrix ar(100000, 1);
  double v = g(rng) / std::sqrt(1 - phi * phi);
  for (Eigen::Index i = 0; i < ar.rows(); ++i) {
    v = phi * v + g(rng);
    ar(i, 0) = v;
  }
  const double tau = mcmc::estimate_iat(ar).tau[0];
  const double rel = std::abs(tau - oracles::ar1_iat(phi)) / oracles::ar1_iat(phi);
  return {mean_err <= 0.05 && cov_err <= 0.1 && rel <= 0.3,
          "mean err " + fixed(mean_err) + " (tol 0.05), cov Frobenius err " + fixed(cov_err) +
              " (tol 0.1), AR(1) tau " + fixed(tau, 2) + " vs 19 (rel err " + fixed(rel) + ", tol 0.3)"};
}

// 8. KDE entropy and KL calibration.
Outcome criterion8() {
  const Eigen::Index n = 100000;
  auto draws = [](Eigen::Index m, Eigen::Index p, double shift, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix out(m, p);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) out(i, j) = g(rng) + shift;
    }
    return out;
  };
  const double h = metrics::entropy_kde(draws(n, 2, 0.0, 81));
  const double h_true = std::log(2 * std::numbers::pi * std::numbers::e);

  mcmc::AdaptiveMetropolisConfig cfg;
  cfg.length = 125000;
  cfg.seed = 82;
  const Box box(Vector::Constant(2, -8.0), Vector::Constant(2, 8.0));
  const auto chain =
      mcmc::adaptive_metropolis([](const Vector& x) { return -0.5 * x.squaredNorm(); }, box, Vector::Zero(2), cfg);
  const Eigen::Index half = chain.size() / 2;
  const double self_kl = metrics::kl_kde(chain.samples.topRows(half), chain.samples.bottomRows(half));
  const double kl = metrics::kl_kde(draws(n, 1, 0.0, 83), draws(n, 1, 1.0, 84));
  return {std::abs(h - h_true) <= 0.1 && std::abs(self_kl) <= 0.05 && std::abs(kl - 0.5) <= 0.1,
          "entropy " + fixed(h, 4) + " vs 2.8379, split-chain self-KL " + fixed(self_kl, 4) +
              ", KL(N(0,1)||N(1,1)) " + fixed(kl, 4) + " vs 0.5"};
}

// 9. Point-model identities.
Outcome criterion9() {
  const auto nd = oracles::frozen_nuclear_data();
  double worst = 0.0;
  auto rel = [&](double a, double b) { worst = std::max(worst, std::abs(a - b) / std::abs(b)); };
  const auto model = testbeds::make_point_model(nd);
  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    auto p = testbeds::PointModelParams::from_vector(model.box.sample_uniform(rng));
    p.x_s = 0.0;
    const double rho = p.rho();
    const Vector v = testbeds::point_model(p, nd);
    const double y = p.eps_F * nd.D2 / (rho * rho);
    rel(v[0], -p.eps_F * p.S / (rho * nd.nu_bar));
    rel(v[1], y);
    rel(v[2], 3 * y * y - p.eps_F * p.eps_F * nd.D3 / (rho * rho * rho));
    p.x_s = 0.5;
    const Vector a = testbeds::point_model(p, nd);
    p.S *= 2;
    const Vector b = testbeds::point_model(p, nd);
    rel(b[0], 2 * a[0]);
    rel(b[1], a[1]);
    rel(b[2], a[2]);
  }
  for (const auto& f : oracles::frozen_point_model_values()) {
    const Vector v = testbeds::point_model(f.params, nd);
    for (Eigen::Index k = 0; k < 3; ++k) rel(v[k], f.value[k]);
  }
  return {worst <= 1e-12, "collapse, S-linearity and symbolic values: max rel err " + sci(worst) + " (tol 1e-12)"};
}

// 10. LML gradient, interpolation and reversion to the prior.
Outcome criterion10() {
  Rng rng(10);
  double worst_grad = 0.0, worst_interp = 0.0, worst_revert = 0.0;
  for (int t = 0; t < 12; ++t) {
    const auto p = static_cast<Eigen::Index>(1 + t % 3);
    const auto d = static_cast<Eigen::Index>(1 + t % 3);
    const auto inst = oracles::random_instance(rng, p, d, 4 + t % 6);
    const gp::Parameterization param(inst.spec, gp::HyperBounds::for_box(Box(Vector::Zero(p), Vector::Ones(p))));
    const auto scaling = gp::OutputScaling::from_data(inst.outputs);
    const Matrix zn = scaling.normalize(inst.outputs);
    const Vector theta = param.pack(inst.spec);
    const auto an = gp::lml_with_gradient(param, theta, inst.inputs, zn, true);
    const auto fd = gp::lml_with_gradient(param, theta, inst.inputs, zn, false, 1e-5);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      worst_grad = std::max(worst_grad, std::abs(an.gradient[i] - fd.gradient[i]) / std::max(1.0, std::abs(fd.gradient[i])));
    }

    auto exact = inst;
    exact.spec.nugget.setZero();
    const gp::TrainedGP g = gp::condition(exact.spec, exact.inputs, exact.outputs);
    for (Eigen::Index i = 0; i < exact.inputs.rows(); ++i) {
      const Vector xi = exact.inputs.row(i).transpose();
      const auto pr = g.predict(xi);
      const double prior = max_abs(g.denormalize_cov(g.prior_block(xi, xi)));
      worst_interp = std::max(worst_interp, max_abs(pr.mean - exact.outputs.row(i).transpose()) /
                                                std::max(1.0, max_abs(exact.outputs)));
      worst_interp = std::max(worst_interp, max_abs(pr.cov) / prior);
    }
    double ell = 0.0;
    for (const auto& lk : exact.spec.latent) ell = std::max(ell, lk.lengthscales.maxCoeff());
    const Vector far = Vector::Constant(p, 1.0 + 20.0 * ell);
    const Matrix prior = g.denormalize_cov(g.prior_block(far, far));
    worst_revert = std::max(worst_revert, max_abs(g.predict(far).cov - prior) / max_abs(prior));
  }
  return {worst_grad <= 1e-4 && worst_interp <= 1e-6 && worst_revert <= 1e-6,
          "gradient rel err " + sci(worst_grad) + " (tol 1e-4), interpolation err " + sci(worst_interp) +
              ", reversion rel err " + sci(worst_revert) + " (tol 1e-6)"};
}

}  // namespace

int main(int argc, char** argv) {
  std::string workdir = (fs::temp_directory_path() / "seqdesign_acceptance").string();
  std::set<int> only;
  bool resume = false;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--workdir" && i + 1 < argc) {
      workdir = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string tok; std::getline(ss, tok, ',');) only.insert(std::stoi(tok));
    } else if (a == "--resume") {
      resume = true;
    } else {
      std::cerr << "usage: " << argv[0] << " [--workdir DIR] [--only 1,2,...] [--resume]\n";
      return 2;
    }
  }
  fs::create_directories(workdir);
  auto wanted = [&](int k) { return only.empty() || only.count(k) > 0; };

  // Runtime limits in seconds.
  const std::map<int, double> limit{{1, 120}, {2, 10}, {3, 30}, {4, 30}, {5, 1800},
                                    {6, 2700}, {7, 60}, {8, 60}, {9, 1}, {10, 30}};
  Campaign campaign;
  int failures = 0;
  auto report = [&](int k, const std::function<Outcome()>& fn) {
    if (!wanted(k)) return;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = k == 5 || k == 6 ? true : secs <= limit.at(k);
    const bool pass = o.pass && in_time;
    failures += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << k << ": " << o.detail << " [" << fixed(secs, 2)
              << " s, limit " << limit.at(k) << " s" << (in_time ? "" : ", over time") << "]" << std::endl;
  };

  report(1, criterion1);
  report(2, criterion2);
  report(3, criterion3);
  report(4, criterion4);
  if (wanted(5) || wanted(6)) {
    report(5, [&] {
      campaign = run_banana_campaign(workdir, resume);
      return criterion5(campaign);
    });
    report(6, [&] {
      if (!campaign.ran) campaign = run_banana_campaign(workdir, true);
      return criterion6(campaign);
    });
  }
  report(7, criterion7);
  report(8, criterion8);
  report(9, criterion9);
  report(10, criterion10);
  std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
