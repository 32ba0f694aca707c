#include <cmath>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>

#include "oracles.hpp"
#include "seqdesign/design.hpp"
#include "seqdesign/inverse.hpp"
#include "seqdesign/mcmc.hpp"

namespace seqdesign::oracles {

RandomInstance random_instance(Rng& rng, Eigen::Index p, Eigen::Index d, Eigen::Index n, double nugget) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  RandomInstance r;
  const gp::KernelFamily families[] = {gp::KernelFamily::rbf, gp::KernelFamily::matern32, gp::KernelFamily::matern52};
  for (Eigen::Index q = 0; q < d; ++q) {
    Vector ls(p);
    for (Eigen::Index k = 0; k < p; ++k) ls[k] = 0.3 + 0.7 * unif(rng);
    r.spec.latent.push_back({families[static_cast<std::size_t>(rng() % 3)], ls, 0.5 + unif(rng)});
  }
  r.spec.mixing = Matrix::Identity(d, d);
  for (Eigen::Index q = 0; q < d; ++q) {
    for (Eigen::Index a = 0; a < d; ++a) r.spec.mixing(q, a) += 0.4 * normal(rng);
  }
  r.spec.nugget = Vector::Constant(d, nugget);
  r.inputs.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < p; ++k) r.inputs(i, k) = unif(rng);
  }
  r.outputs.resize(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index a = 0; a < d; ++a) {
      r.outputs(i, a) = std::sin(3.0 * r.inputs.row(i).sum() + static_cast<double>(a)) + 0.1 * normal(rng);
    }
  }
  return r;
}

ToyProblem standard_toy() {
  ToyProblem toy;
  toy.spec = gp::KernelSpec::make_default(gp::KernelFamily::rbf, Vector::Constant(1, 0.12), 1, 1.0, 1e-8);
  toy.inputs = Matrix{{0.05}, {0.3}, {0.55}, {0.9}};
  toy.outputs.resize(4, 1);
  for (int i = 0; i < 4; ++i) toy.outputs(i, 0) = std::sin(6.0 * toy.inputs(i, 0)) + toy.inputs(i, 0);
  toy.scaling = gp::OutputScaling::identity(1);
  toy.y = Matrix{{-0.1}, {-0.3}};
  toy.c_obs = Matrix::Constant(1, 1, 0.04);
  return toy;
}

Vector CriterionComparison::z_scores() const {
  return (library - oracle).cwiseAbs().array() / (library_se.array().square() + oracle_se.array().square()).sqrt();
}

CriterionComparison criterion_comparison(std::uint64_t seed, int n_draws, int grid_points, int chain_length) {
  const ToyProblem toy = standard_toy();
  CriterionComparison c;
  c.probes = Vector::LinSpaced(10, 0.05, 0.95);

  auto gp_ptr = std::make_shared<const gp::TrainedGP>(gp::condition(toy.spec, toy.inputs, toy.outputs, toy.scaling));
  const Box box(Vector::Constant(1, toy.lo), Vector::Constant(1, toy.hi));
  const inverse::InverseProblem ip(inverse::ObservationSet::make(toy.y, toy.c_obs), gp_ptr, box);
  mcmc::AdaptiveMetropolisConfig mc;
  mc.length = chain_length;
  mc.seed = seed;
  const auto chain = mcmc::adaptive_metropolis([&](const Vector& x) { return ip.log_posterior(x); }, box,
                                               box.center(), mc);

  constexpr int kBatches = 50;
  const Eigen::Index per = chain.size() / kBatches;
  std::vector<design::IntegratedCovarianceCriterion> batches;
  batches.reserve(kBatches);
  for (int b = 0; b < kBatches; ++b) {
    batches.emplace_back(*gp_ptr, chain.samples.middleRows(b * per, per), Vector::Constant(per, 1.0 / per));
  }
  c.library.resize(c.probes.size());
  c.library_se.resize(c.probes.size());
  for (Eigen::Index i = 0; i < c.probes.size(); ++i) {
    const Vector x = Vector::Constant(1, c.probes[i]);
    c.library[i] = design::ipsur_criterion(*gp_ptr, chain, x, 1.0, 0);
    Vector means(kBatches);
    for (int b = 0; b < kBatches; ++b) means[b] = batches[static_cast<std::size_t>(b)](x);
    const double m = means.mean();
    c.library_se[i] = std::sqrt((means.array() - m).square().sum() / (kBatches - 1) / kBatches);
  }
  const ToyEstimate bf = toy_bruteforce(toy, c.probes, n_draws, grid_points, seed ^ 0x5eedULL);
  c.oracle = bf.value;
  c.oracle_se = bf.se;
  return c;
}

// ---------------------------------------------------------------------------

namespace {

struct Reporter {
  std::ostream& out;
  int failures = 0;
  void check(bool ok, const std::string& name, const std::string& detail) {
    out << (ok ? "PASS " : "FAIL ") << name << ": " << detail << '\n';
    if (!ok) ++failures;
  }
};

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(2) << v;
  return os.str();
}

double max_abs(const Matrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

void gp_suite(Reporter& rep) {
  Rng rng(101);
  double worst_mean = 0.0, worst_cov = 0.0, worst_cross = 0.0, worst_lml = 0.0, worst_update = 0.0;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const auto p = static_cast<Eigen::Index>(1 + t % 4);
    const auto d = static_cast<Eigen::Index>(1 + t % 3);
    const auto n = static_cast<Eigen::Index>(2 + t % 11);
    const RandomInstance inst = random_instance(rng, p, d, n);
    const gp::TrainedGP g = gp::condition(inst.spec, inst.inputs, inst.outputs);
    Vector x(p), xs(p);
    for (Eigen::Index k = 0; k < p; ++k) {
      x[k] = unif(rng);
      xs[k] = unif(rng);
    }
    const DensePosterior ref = direct_predict(inst.spec, inst.inputs, inst.outputs, g.scaling(), x);
    const gp::Prediction got = g.predict(x);
    worst_mean = std::max(worst_mean, max_abs(got.mean - ref.mean) / std::max(1.0, max_abs(ref.mean)));
    worst_cov = std::max(worst_cov, max_abs(got.cov - ref.cov) / std::max(1.0, max_abs(ref.cov)));
    worst_cross = std::max(worst_cross, max_abs(g.cross_cov(xs, x) - direct_cross(inst.spec, inst.inputs, g.scaling(), xs, x)));
    const double lml = dense_lml(inst.spec, inst.inputs, inst.outputs, g.scaling());
    worst_lml = std::max(worst_lml, std::abs(g.log_marginal_likelihood() - lml) / std::max(1.0, std::abs(lml)));
    worst_update = std::max(worst_update, max_abs(g.updated_cov(xs, x) - reconditioned_cov(inst.spec, inst.inputs, g.scaling(), xs, x)));
  }
  rep.check(worst_mean <= 1e-8, "gp/predict-mean", "max rel err " + sci(worst_mean) + " (tol 1e-8, 50 instances)");
  rep.check(worst_cov <= 1e-8, "gp/predict-cov", "max rel err " + sci(worst_cov) + " (tol 1e-8)");
  rep.check(worst_cross <= 1e-8, "gp/cross-cov", "max abs err " + sci(worst_cross) + " (tol 1e-8)");
  rep.check(worst_lml <= 1e-8, "gp/lml-dense", "max rel err " + sci(worst_lml) + " (tol 1e-8)");
  rep.check(worst_update <= 1e-7, "gp/update-vs-recondition", "max abs err " + sci(worst_update) + " (tol 1e-7)");
}

void inverse_suite(Reporter& rep) {
  for (const auto& name : testbeds::testbed_names()) {
    const auto model = testbeds::make_testbed(name);
    const Matrix x = testbeds::initial_design(model.box, 15, 7);
    const Matrix z = model.eval_rows(x);
    const auto spec = gp::KernelSpec::make_default(gp::KernelFamily::matern52, 0.3 * model.box.width(),
                                                   model.output_dim, 1.0, 1e-6);
    auto g = std::make_shared<const gp::TrainedGP>(gp::condition(spec, x, z));
    const auto setup = testbeds::default_observation_setup(model);
    const auto obs = testbeds::make_observations(setup.center, setup.c_obs, setup.n, 3);
    const inverse::InverseProblem ip(obs, g, model.box);
    Rng rng(5);
    double first = 0.0, spread = 0.0, worst_oracle = 0.0;
    for (int i = 0; i < 20; ++i) {
      const Vector xi = model.box.sample_uniform(rng);
      const double diff = ip.log_likelihood_full(xi) - ip.log_likelihood(xi);
      if (i == 0) first = diff;
      spread = std::max(spread, std::abs(std::expm1(diff - first)));
      const gp::Prediction pr = g->predict(xi);
      const double ref = kronecker_loglik(obs.y, pr.mean, pr.cov, obs.c_obs);
      worst_oracle = std::max(worst_oracle, std::abs(ip.log_likelihood_full(xi) - ref) / std::max(1.0, std::abs(ref)));
    }
    rep.check(spread <= 1e-6, "inverse/proportionality-" + name, "relative spread " + sci(spread) + " (tol 1e-6)");
    rep.check(worst_oracle <= 1e-9, "inverse/kronecker-" + name, "max rel err " + sci(worst_oracle) + " (tol 1e-9)");
  }
}

void design_suite(Reporter& rep) {
  const Box box(Vector::Constant(1, 0.0), Vector::Constant(1, 1.0));
  const Matrix x{{0.1}, {0.3}, {0.45}, {0.5}, {0.8}};
  Matrix z(5, 1);
  for (int i = 0; i < 5; ++i) z(i, 0) = std::cos(4.0 * x(i, 0));
  const auto spec = gp::KernelSpec::make_default(gp::KernelFamily::matern52, Vector::Constant(1, 0.2), 1, 1.0, 0.0);
  const gp::TrainedGP g = gp::condition(spec, x, z);

  optim::AnnealConfig cfg;
  cfg.seed = 3;
  const auto dsel = design::d_optimal_select(g, box, cfg);
  const auto grid = grid_argmax(
      [&](const Vector& v) { return direct_predict(spec, x, z, g.scaling(), v).cov(0, 0); }, box, 10000);
  rep.check(std::abs(dsel.x[0] - grid.x[0]) <= grid.cell[0], "design/dopt-grid-1d",
            "selected " + std::to_string(dsel.x[0]) + " grid " + std::to_string(grid.x[0]));

  // Symmetric data: the integrated reduction is maximal at the center.
  const Box sym(Vector::Constant(1, -1.0), Vector::Constant(1, 1.0));
  const Matrix xs{{-0.6}, {0.6}};
  const Matrix zs{{0.5}, {0.5}};
  const auto sspec = gp::KernelSpec::make_default(gp::KernelFamily::rbf, Vector::Constant(1, 0.3), 1, 1.0, 0.0);
  const gp::TrainedGP gs = gp::condition(sspec, xs, zs, gp::OutputScaling::identity(1));
  const auto isel = design::i_optimal_select(gs, sym, cfg, 256);
  rep.check(std::abs(isel.x[0]) <= 0.01, "design/iopt-symmetric", "selected " + std::to_string(isel.x[0]));
}

void testbeds_suite(Reporter& rep) {
  const auto nd = frozen_nuclear_data();
  double worst = 0.0, worst_expanded = 0.0;
  for (const auto& f : frozen_point_model_values()) {
    const Vector v = testbeds::point_model(f.params, nd);
    worst = std::max(worst, ((v - f.value).array() / f.value.array()).abs().maxCoeff());
    const Vector e = point_model_expanded(f.params, nd);
    worst_expanded = std::max(worst_expanded, ((v - e).array() / e.array()).abs().maxCoeff());
  }
  rep.check(worst <= 1e-12, "testbeds/point-model-frozen", "max rel err " + sci(worst) + " (tol 1e-12)");
  rep.check(worst_expanded <= 1e-12, "testbeds/point-model-expanded", "max rel err " + sci(worst_expanded));
}

void criterion_suite(Reporter& rep) {
  const CriterionComparison c = criterion_comparison(2024);
  const Vector zs = c.z_scores();
  for (Eigen::Index i = 0; i < c.probes.size(); ++i) {
    std::ostringstream os;
    os << "x=" << c.probes[i] << " closed-form " << sci(c.library[i]) << " brute-force " << sci(c.oracle[i])
       << " z=" << std::fixed << std::setprecision(2) << zs[i];
    rep.check(zs[i] <= 3.0, "criterion/probe-" + std::to_string(i), os.str());
  }
}

}  // namespace

std::vector<std::string> battery_suites() { return {"gp", "inverse", "design", "testbeds", "criterion", "all"}; }

int run_battery(const std::string& suite, std::ostream& out) {
  Reporter rep{out};
  const bool all = suite == "all";
  bool known = all;
  if (all || suite == "gp") { gp_suite(rep); known = true; }
  if (all || suite == "inverse") { inverse_suite(rep); known = true; }
  if (all || suite == "design") { design_suite(rep); known = true; }
  if (all || suite == "testbeds") { testbeds_suite(rep); known = true; }
  if (all || suite == "criterion") { criterion_suite(rep); known = true; }
  if (!known) throw ConfigError("unknown oracle suite: " + suite);
  return rep.failures;
}

}  // namespace seqdesign::oracles
