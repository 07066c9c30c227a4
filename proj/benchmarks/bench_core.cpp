#include <benchmark/benchmark.h>

#include <numbers>

#include "flowdistill/distill.hpp"
#include "flowdistill/generator.hpp"
#include "flowdistill/network.hpp"
#include "flowdistill/prior.hpp"
#include "flowdistill/rng.hpp"
#include "flowdistill/sampler.hpp"

using namespace flowdistill;

namespace {

MlpConfig net_config(std::size_t dim) {
  MlpConfig c;
  c.dim = dim;
  c.hidden = {64, 64};
  c.zero_init_output = false;
  return c;
}

void BM_MlpForwardBatch(benchmark::State& state) {
  const auto batch = state.range(0);
  Rng rng(1);
  const MlpDenoiser net(net_config(2), rng);
  Matrix x(2, batch);
  for (Eigen::Index j = 0; j < batch; ++j) x.col(j) = normal_vector(rng, 2);
  const std::vector<double> sigmas(static_cast<std::size_t>(batch), 0.7);
  const std::vector<Condition> conds(static_cast<std::size_t>(batch));
  for (auto _ : state) benchmark::DoNotOptimize(net.forward_batch(x, sigmas, conds));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpForwardBatch)->Arg(1)->Arg(64)->Arg(512);

void BM_MlpVjpBatch(benchmark::State& state) {
  const auto batch = state.range(0);
  Rng rng(2);
  const MlpDenoiser net(net_config(2), rng);
  Matrix x(2, batch), cot(2, batch);
  for (Eigen::Index j = 0; j < batch; ++j) x.col(j) = normal_vector(rng, 2), cot.col(j) = normal_vector(rng, 2);
  const std::vector<double> sigmas(static_cast<std::size_t>(batch), 0.7);
  const std::vector<Condition> conds(static_cast<std::size_t>(batch));
  for (auto _ : state) benchmark::DoNotOptimize(net.vjp_batch(x, sigmas, conds, cot));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpVjpBatch)->Arg(64);

void BM_MultiViewRender(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const MultiViewGenerator g({side, side});
  Rng rng(3);
  const Vector theta = normal_vector(rng, static_cast<Eigen::Index>(side * side));
  const CameraPose pose{0.3 * std::numbers::pi, 0.2, -0.1, 0};
  for (auto _ : state) benchmark::DoNotOptimize(g.render(theta, pose));
}
BENCHMARK(BM_MultiViewRender)->Arg(16)->Arg(32)->Arg(64);

void BM_MultiViewVjp(benchmark::State& state) {
  const auto side = static_cast<std::size_t>(state.range(0));
  const MultiViewGenerator g({side, side});
  Rng rng(4);
  const Vector u = normal_vector(rng, static_cast<Eigen::Index>(side * side));
  const CameraPose pose{0.3 * std::numbers::pi, 0.2, -0.1, 0};
  for (auto _ : state) benchmark::DoNotOptimize(g.vjp(pose, u));
}
BENCHMARK(BM_MultiViewVjp)->Arg(32);

void BM_EulerStepMixture(benchmark::State& state) {
  const auto d = static_cast<Eigen::Index>(state.range(0));
  const PriorDenoiser prior(GaussianMixturePrior::gaussian(Vector::Zero(d), 0.5));
  Rng rng(5);
  const Vector x = normal_vector(rng, d);
  for (auto _ : state) benchmark::DoNotOptimize(euler_step(prior, x, 2.0, 1.8));
}
BENCHMARK(BM_EulerStepMixture)->Arg(2)->Arg(1024);

void BM_ApfoUpdate(benchmark::State& state) {
  const MultiViewGenerator g({32, 32});
  const auto prior = GaussianMixturePrior::gaussian(Vector::Constant(1024, 0.5), 0.1);
  const auto targets = shared_prior_targets(uniform_poses(8), single_prior_set(prior));
  DistillConfig cfg;
  cfg.aux = AuxMode::analytic;
  auto aux = make_aux_model(cfg);
  ParameterOptimizer opt(cfg.optimizer);
  Scene scene = Scene::grid({32, 32});
  const std::vector<std::size_t> views{0, 1, 2, 3, 4};
  for (auto _ : state) benchmark::DoNotOptimize(apfo_update(g, scene, {0.5, 2.0, 1.9}, views, targets, *aux, opt, cfg, 0));
}
BENCHMARK(BM_ApfoUpdate);

}  // namespace

BENCHMARK_MAIN();
