#include <benchmark/benchmark.h>

#include "tjaidl/eval.hpp"
#include "tjaidl/losses.hpp"
#include "tjaidl/trainer.hpp"

using namespace tjaidl;

namespace {

Tensor random_matrix(std::size_t rows, std::size_t cols, SeededRng& rng, bool grad = false) {
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_values({rows, cols}, std::move(v), grad);
}

}  // namespace

static void BM_MatmulForward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(1);
  Tensor a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_MatmulForward)->Arg(16)->Arg(64)->Arg(128);

static void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(2);
  Tensor a = random_matrix(n, n, rng, true), b = random_matrix(n, n, rng, true);
  for (auto _ : state) {
    backward(sum_all(square(matmul(a, b))));
    a.zero_grad();
    b.zero_grad();
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(16)->Arg(64);

// One full Step I iteration (three updates) at default sizes.
static void BM_JointStep(benchmark::State& state) {
  GenConfig g;
  const auto data = generate_pair(g);
  TrainConfig c;
  Trainer t(c, c.model_config(data.source.feature_dim(), data.source.num_identities(),
                              data.source.num_attributes()));
  BatchSampler sampler(data.source, c.batch_size, 3);
  for (auto _ : state) benchmark::DoNotOptimize(t.joint_train_step(sampler.next()));
}
BENCHMARK(BM_JointStep);

static void BM_AdaptStep(benchmark::State& state) {
  GenConfig g;
  g.domain_shift = 1.0;
  const auto data = generate_pair(g);
  const Dataset target = data.target.strip_labels();
  TrainConfig c;
  Trainer t(c, c.model_config(data.source.feature_dim(), data.source.num_identities(),
                              data.source.num_attributes()));
  BatchSampler sampler(target, c.batch_size, 4);
  for (auto _ : state) benchmark::DoNotOptimize(t.adapt_step(sampler.next()));
}
BENCHMARK(BM_AdaptStep);

static void BM_EvaluateTarget(benchmark::State& state) {
  const auto data = generate_pair(GenConfig{});
  SeededRng rng(5);
  FeatureMatrix f = to_feature_matrix(random_matrix(data.target.size(), 64, rng));
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(f, data.target));
}
BENCHMARK(BM_EvaluateTarget)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
