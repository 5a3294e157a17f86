#include <benchmark/benchmark.h>

#include "gdcaf/rng.hpp"
#include "gdcaf/tensor.hpp"

namespace {

gdcaf::Tensor random_tensor(std::vector<int> shape, gdcaf::Rng& rng) {
  gdcaf::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0f, 1.0f);
  return t;
}

void BM_DepthwiseConv(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  gdcaf::Rng rng(1);
  gdcaf::Tensor in = random_tensor({c, 32, 32}, rng);
  gdcaf::Tensor ker = random_tensor({c, 2, 3, 3}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gdcaf::conv2d_depthwise(in, ker));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c) * 2 * 32 * 32 * 9);
}
BENCHMARK(BM_DepthwiseConv)->Arg(6)->Arg(24)->Arg(48);

void BM_PointwiseConv(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  gdcaf::Rng rng(2);
  gdcaf::Tensor in = random_tensor({c, 32, 32}, rng);
  gdcaf::Tensor w = random_tensor({c, c}, rng);
  gdcaf::Tensor b = random_tensor({c}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gdcaf::conv2d_pointwise(in, w, b));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(c) * c * 32 * 32);
}
BENCHMARK(BM_PointwiseConv)->Arg(12)->Arg(24)->Arg(48);

void BM_GroupNorm(benchmark::State& state) {
  gdcaf::Rng rng(3);
  gdcaf::Tensor in = random_tensor({24, 32, 32}, rng);
  gdcaf::Tensor gamma = gdcaf::Tensor::full({24}, 1.0f);
  gdcaf::Tensor beta({24});
  for (auto _ : state) {
    benchmark::DoNotOptimize(gdcaf::group_norm(in, 4, gamma, beta, 1e-5f));
  }
}
BENCHMARK(BM_GroupNorm);

}  // namespace
