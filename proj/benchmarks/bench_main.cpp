#include <benchmark/benchmark.h>

#include "icl/data_synth.hpp"
#include "icl/metrics.hpp"
#include "icl/ops.hpp"
#include "icl/rng.hpp"
#include "icl/trainer.hpp"

using namespace icl;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool grad) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Forward and backward of one 3x3 convolution at backbone-like sizes.
void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  Tensor x = random_tensor({c, hw, hw}, rng, true);
  Tensor w = random_tensor({c, c, 3, 3}, rng, true);
  for (auto _ : state) {
    Tensor y = sum(conv2d(x, w));
    y.backward();
    benchmark::DoNotOptimize(x.grad().data());
    x.zero_grad();
    w.zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c * c * hw * hw * 9));
}
BENCHMARK(BM_Conv2dForwardBackward)->Args({8, 64})->Args({16, 32})->Args({32, 16});

void BM_TrainStep(benchmark::State& state) {
  const auto mode = static_cast<TrainMode>(state.range(0));
  const auto split = make_split(SplitConfig{4, 8, 1, 3}, PhantomConfig{});
  TrainConfig config;
  config.mode = mode;
  TrainState ts;
  ts.model = IclModel(ModelConfig{}, 3);
  const std::size_t unlabeled = mode == TrainMode::icl ? 2 : 0;
  std::uint64_t step = 0;
  for (auto _ : state) {
    auto batch = compose_batch(split, BatchPlan{3, step++, 2, unlabeled});
    benchmark::DoNotOptimize(train_step(ts, batch, config));
  }
  state.SetLabel(to_string(mode));
}
BENCHMARK(BM_TrainStep)
    ->Arg(static_cast<int>(TrainMode::icl))
    ->Arg(static_cast<int>(TrainMode::supervised))
    ->Arg(static_cast<int>(TrainMode::supervised_sspa))
    ->Unit(benchmark::kMillisecond);

void BM_Hd95(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto s = generate_sample(5, PhantomConfig{n, n, 4, 0.05});
  const auto gt = ClassMask::from_labels(s.mask, 2);
  const auto pred = ClassMask::from_labels(augment(s, true, false, 0).mask, 2);
  for (auto _ : state) benchmark::DoNotOptimize(hd95(pred, gt));
}
BENCHMARK(BM_Hd95)->Arg(64)->Arg(128)->Arg(256);

}  // namespace
BENCHMARK_MAIN();
