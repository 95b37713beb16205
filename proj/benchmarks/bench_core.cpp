#include <benchmark/benchmark.h>

#include "bnn/metrics.hpp"
#include "bnn/nn.hpp"
#include "bnn/random.hpp"
#include "bnn/samplers.hpp"

using namespace bnn;

namespace {

Batch regression_batch(Eigen::Index n, Rng& rng) {
  Batch b{standard_normal(n, rng), Matrix(n, 1)};
  b.y.col(0) = b.x.col(0).array().sin() + 0.1 * standard_normal(n, rng).array();
  return b;
}

void BM_GradLogJoint(benchmark::State& state) {
  Rng rng(1);
  const MlpSpec spec({1, 50, 1});
  const Batch data = regression_batch(state.range(0), rng);
  const WeightVector w = 0.3 * standard_normal(spec.param_count(), rng);
  const auto model = LikelihoodModel::gaussian(0.1);
  for (auto _ : state) benchmark::DoNotOptimize(grad_log_joint(model, spec, w, data));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_GradLogJoint)->Arg(32)->Arg(100)->Arg(1000);

void BM_Leapfrog(benchmark::State& state) {
  Rng rng(2);
  const BnnLogJoint target(LikelihoodModel::gaussian(0.1), MlpSpec({1, 50, 1}), regression_batch(100, rng));
  const Vector w = 0.3 * standard_normal(target.dim(), rng);
  const Vector p = standard_normal(target.dim(), rng);
  const int steps = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(leapfrog(w, p, 1e-3, steps, target));
  state.SetItemsProcessed(state.iterations() * steps);
}
BENCHMARK(BM_Leapfrog)->Arg(10)->Arg(100);

void BM_IntervalBand(benchmark::State& state) {
  Rng rng(3);
  PredictiveSamples pred;
  pred.values = Matrix::Random(500, state.range(0));
  pred.kind = PredictiveKind::regression_values;
  for (auto _ : state) benchmark::DoNotOptimize(interval_band(pred));
}
BENCHMARK(BM_IntervalBand)->Arg(200);

}  // namespace

BENCHMARK_MAIN();
