#include <benchmark/benchmark.h>

#include <memory>

#include "seqdesign/design.hpp"
#include "seqdesign/inverse.hpp"
#include "seqdesign/mcmc.hpp"
#include "seqdesign/metrics.hpp"
#include "seqdesign/testbeds.hpp"

using namespace seqdesign;

namespace {

struct BananaFixture {
  testbeds::DirectModel model = testbeds::make_banana();
  std::shared_ptr<const gp::TrainedGP> gp;
  std::unique_ptr<inverse::InverseProblem> ip;
  mcmc::PosteriorChain chain;

  explicit BananaFixture(int n) {
    const Matrix x = testbeds::initial_design(model.box, n, 1);
    const auto spec =
        gp::KernelSpec::make_default(gp::KernelFamily::matern52, 0.3 * model.box.width(), model.output_dim, 1.0, 1e-6);
    const auto fitted = gp::fit_hyperparameters(spec, x, model.eval_rows(x), gp::HyperBounds::for_box(model.box), {});
    const Matrix z = model.eval_rows(x);
    gp = std::make_shared<const gp::TrainedGP>(gp::condition(fitted.spec, x, z));
    const auto setup = testbeds::default_observation_setup(model);
    ip = std::make_unique<inverse::InverseProblem>(
        testbeds::make_observations(setup.center, setup.c_obs, setup.n, 2), gp, model.box);
    mcmc::AdaptiveMetropolisConfig cfg;
    cfg.length = 20000;
    chain = mcmc::adaptive_metropolis([this](const Vector& v) { return ip->log_posterior(v); }, model.box,
                                      inverse::find_map(*ip, {}).x, cfg);
  }
};

const BananaFixture& fixture(int n) {
  static BananaFixture f10(10), f30(30);
  return n == 10 ? f10 : f30;
}

void BM_Predict(benchmark::State& state) {
  const auto& f = fixture(static_cast<int>(state.range(0)));
  const Vector x = f.model.box.center();
  for (auto _ : state) benchmark::DoNotOptimize(f.gp->predict(x));
}
BENCHMARK(BM_Predict)->Arg(10)->Arg(30);

void BM_IpsurCriterion(benchmark::State& state) {
  const auto& f = fixture(static_cast<int>(state.range(0)));
  const Matrix nodes = f.chain.strided(2000).samples;
  const design::IntegratedCovarianceCriterion crit(*f.gp, nodes, Vector::Constant(nodes.rows(), 1.0 / nodes.rows()));
  Rng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(crit(f.model.box.sample_uniform(rng)));
}
BENCHMARK(BM_IpsurCriterion)->Arg(10)->Arg(30)->Unit(benchmark::kMicrosecond);

void BM_AdaptiveMetropolis(benchmark::State& state) {
  const auto& f = fixture(10);
  mcmc::AdaptiveMetropolisConfig cfg;
  cfg.length = static_cast<int>(state.range(0));
  for (auto _ : state) {
    benchmark::DoNotOptimize(mcmc::adaptive_metropolis(
        [&f](const Vector& v) { return f.ip->log_posterior(v); }, f.model.box, f.chain.samples.row(0).transpose(), cfg));
  }
}
BENCHMARK(BM_AdaptiveMetropolis)->Arg(20000)->Unit(benchmark::kMillisecond);

void BM_EntropyKde(benchmark::State& state) {
  const auto& f = fixture(10);
  for (auto _ : state) benchmark::DoNotOptimize(metrics::entropy_kde(f.chain.samples));
}
BENCHMARK(BM_EntropyKde)->Unit(benchmark::kMillisecond);

void BM_Ivar(benchmark::State& state) {
  const auto& f = fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(metrics::ivar(*f.gp, f.chain));
}
BENCHMARK(BM_Ivar)->Arg(10)->Arg(30)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
