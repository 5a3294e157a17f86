#include <benchmark/benchmark.h>

#include "gdcaf/model.hpp"
#include "gdcaf/rng.hpp"

namespace {

// Forward cost of the four pooling configurations on a shared geometry; the
// reported MACs make the relative savings visible next to wall time.
void BM_ForwardPoolingCase(benchmark::State& state) {
  const int pool_case = static_cast<int>(state.range(0));
  gdcaf::ModelConfig cfg;
  cfg.nodes = 4;
  cfg.t_in = 6;
  cfg.heads = 4;
  cfg.blocks = 2;
  cfg.height = cfg.width = 32;
  cfg.pool_qkv = pool_case == 2 || pool_case == 4;
  cfg.pool_input = pool_case == 3 || pool_case == 4;
  gdcaf::GdCaf model(cfg, 7);

  gdcaf::Rng rng(11);
  gdcaf::Tensor x({4, 6, 32, 32});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.0f, 1.0f);

  gdcaf::macs::reset();
  (void)model.predict(x);
  const double macs_per_forward = static_cast<double>(gdcaf::macs::count());

  for (auto _ : state) {
    benchmark::DoNotOptimize(model.predict(x));
  }
  state.counters["macs"] = macs_per_forward;
}
BENCHMARK(BM_ForwardPoolingCase)->Arg(1)->Arg(2)->Arg(3)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  gdcaf::ModelConfig cfg;
  cfg.nodes = 4;
  cfg.t_in = 6;
  cfg.heads = 2;
  cfg.blocks = 1;
  cfg.height = cfg.width = 16;
  gdcaf::GdCaf model(cfg, 3);

  gdcaf::Rng rng(5);
  gdcaf::Tensor x({4, 6, 16, 16});
  gdcaf::Tensor y({4, 16, 16});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.0f, 1.0f);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = rng.uniform(0.0f, 1.0f);

  for (auto _ : state) {
    gdcaf::Tape tape;
    gdcaf::Var loss = tape.mse_against(model.forward(tape, x), y);
    model.params().zero_grads();
    tape.backward(loss);
    benchmark::DoNotOptimize(model.params());
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
