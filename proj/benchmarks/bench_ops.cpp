#include <benchmark/benchmark.h>

#include "seqseg/ops.hpp"

using namespace seqseg;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = false) {
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = rng.uniform(-1, 1);
  return Tensor::from_data(std::move(shape), std::move(data), requires_grad);
}

void BM_Conv2dForward(benchmark::State& state) {
  Rng rng(0);
  const int c = static_cast<int>(state.range(0));
  Tensor x = random_tensor({c, 96, 128}, rng);
  Tensor k = random_tensor({c, c, 5, 5}, rng);
  Tensor b = random_tensor({c}, rng);
  for (auto _ : state) {
    Tensor y = conv2d(x, k, b, 1, 1, Padding::Same);
    benchmark::DoNotOptimize(y.data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(c) * c * 25 * 96 * 128);
}
BENCHMARK(BM_Conv2dForward)->Arg(8)->Arg(16)->Arg(32);

void BM_Conv2dTrainStep(benchmark::State& state) {
  Rng rng(0);
  const int c = static_cast<int>(state.range(0));
  Tensor x = random_tensor({c, 96, 128}, rng);
  Tensor k = random_tensor({c, c, 5, 5}, rng, true);
  Tensor b = random_tensor({c}, rng, true);
  for (auto _ : state) {
    k.zero_grad();
    b.zero_grad();
    Tensor loss = sum(conv2d(x, k, b, 1, 1, Padding::Same));
    loss.backward();
    benchmark::DoNotOptimize(k.grad().data());
  }
}
BENCHMARK(BM_Conv2dTrainStep)->Arg(8)->Arg(16);

void BM_Conv3dFusionLayer(benchmark::State& state) {
  Rng rng(0);
  Tensor x = random_tensor({16, 5, 24, 32}, rng);
  Tensor k = random_tensor({16, 16, 5, 7, 7}, rng);
  Tensor b = random_tensor({16}, rng);
  for (auto _ : state) {
    Tensor y = conv3d(x, k, b, 2, Padding::Same);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_Conv3dFusionLayer);

}  // namespace
