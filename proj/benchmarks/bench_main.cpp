#include <benchmark/benchmark.h>

#include "fedpsa/config.hpp"
#include "fedpsa/data.hpp"
#include "fedpsa/model.hpp"
#include "fedpsa/sensitivity.hpp"
#include "fedpsa/sim.hpp"

using namespace fedpsa;

namespace {

ModelSpec spec_for(int hidden) {
  return hidden == 0 ? ModelSpec::linear(784, 10) : ModelSpec::mlp(784, static_cast<std::size_t>(hidden), 10);
}

Batch sample_batch(std::size_t n) {
  const auto data = make_synthetic(10, 784, (n + 9) / 10, 3);
  std::vector<std::size_t> rows(n);
  for (std::size_t i = 0; i < n; ++i) rows[i] = i;
  return data.samples.gather(rows);
}

void BM_Gradient(benchmark::State& state) {
  const auto spec = spec_for(static_cast<int>(state.range(0)));
  const auto params = init_params(spec, 1);
  const auto batch = sample_batch(64);
  for (auto _ : state) benchmark::DoNotOptimize(gradient(spec, params, batch));
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Gradient)->Arg(0)->Arg(32);

void BM_SensitivityAndSketch(benchmark::State& state) {
  const auto spec = ModelSpec::linear(784, 10);
  const auto params = init_params(spec, 1);
  const auto calib = self_labeled(spec, params, sample_batch(64));
  const auto proj = ProjectionMatrix::gaussian(0, static_cast<std::size_t>(state.range(0)), spec.param_count());
  for (auto _ : state) benchmark::DoNotOptimize(sketch(sensitivity_second_order(spec, params, calib), proj));
}
BENCHMARK(BM_SensitivityAndSketch)->Arg(16)->Arg(128);

void BM_LocalUpdate(benchmark::State& state) {
  const auto spec = ModelSpec::linear(784, 10);
  const auto params = init_params(spec, 1);
  const auto data = sample_batch(600);
  SgdOptions opts;
  for (auto _ : state) benchmark::DoNotOptimize(local_update(spec, params, data, opts, 7));
  state.SetItemsProcessed(state.iterations() * 600 * opts.epochs);
}
BENCHMARK(BM_LocalUpdate)->Unit(benchmark::kMillisecond);

void BM_SmokeSimulation(benchmark::State& state) {
  RunConfig c;
  c.n_clients = 10;
  c.horizon_days = 0.5;
  const auto data = load_dataset(c.dataset);
  for (auto _ : state) benchmark::DoNotOptimize(run_simulation(c, data));
}
BENCHMARK(BM_SmokeSimulation)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
