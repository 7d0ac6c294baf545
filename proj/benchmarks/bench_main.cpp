#include <memory>

#include <benchmark/benchmark.h>

#include "gminf/estimators.hpp"
#include "gminf/flow.hpp"
#include "gminf/kernels.hpp"
#include "gminf/targets.hpp"

namespace gminf {
namespace {

KernelSpec mollified(double sigma, std::size_t samples) {
  KernelSpec k;
  k.bandwidth = 1.0;
  k.mollifier.sigma = sigma;
  k.mollifier.samples = samples;
  return k;
}

void BM_KernelMatrix(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m = static_cast<std::size_t>(state.range(1));
  SeededRng rng(1);
  const PointSet points = gmm_sample(GmmTarget::ring8(), n, rng);
  const KernelSpec k = mollified(0.05, m);
  const PointSet eps = mollifier_draws(rng, 2, 0.05, m);
  for (auto _ : state) benchmark::DoNotOptimize(kernel_matrix(k, points, eps));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KernelMatrix)->ArgsProduct({{64, 256, 1024}, {1, 16}});

void BM_FitKrr(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng data_rng(2);
  const PointSet points = gmm_sample(GmmTarget::ring8(), n, data_rng);
  const KernelSpec k = mollified(0.05, 8);
  for (auto _ : state) {
    SeededRng rng(3);
    benchmark::DoNotOptimize(fit_krr(points, k, 1.0, rng));
  }
}
BENCHMARK(BM_FitKrr)->Arg(64)->Arg(256)->Arg(1024);

void BM_FlowStep(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(4);
  const auto net = std::make_shared<const MlpNet>(
      MlpNet::random({2, 64, 64, 2}, Activation::Tanh, rng));
  const Generator g = Generator::mlp(net);
  ParticleSet p;
  p.z = gaussian_draws(rng, n, 2, 1.0);
  p.x = g.generate(p.z);
  const PointSet data = gmm_sample(GmmTarget::ring8(), n, rng);
  const KernelSpec k = mollified(0.05, 8);
  const DensityEstimate q = fit_krr(p.x, k, 1.0, rng);
  const DensityEstimate pd = fit_krr(data, k, 1.0, rng);
  const FlowConfig config;
  for (auto _ : state) {
    benchmark::DoNotOptimize(flow_step(p, g, q, &pd, ConditionModel{}, config));
  }
}
BENCHMARK(BM_FlowStep)->Arg(64)->Arg(256);

}  // namespace
}  // namespace gminf

BENCHMARK_MAIN();
