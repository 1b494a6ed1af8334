#include <benchmark/benchmark.h>

#include "ticket/attack.hpp"
#include "ticket/data.hpp"
#include "ticket/nn.hpp"
#include "ticket/prune.hpp"
#include "ticket/rng.hpp"

using namespace ticket;

namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  Tensor t(std::move(shape));
  Rng rng(seed);
  for (auto& v : t.data) v = static_cast<float>(rng.gaussian());
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const Tensor a = random_tensor({n, n}, 1);
  const Tensor b = random_tensor({n, n}, 2);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(tape.value(tape.matmul(tape.leaf(a), tape.leaf(b))));
  }
  state.SetItemsProcessed(state.iterations() * 2ll * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(128)->Arg(256)->Arg(512);

void BM_Conv2dForward(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const Tensor x = random_tensor({batch, 6, 14, 14}, 3);
  const Tensor k = random_tensor({16, 6, 5, 5}, 4);
  for (auto _ : state) {
    Tape tape;
    benchmark::DoNotOptimize(tape.value(tape.conv2d(tape.leaf(x), tape.leaf(k), Pad::Valid)));
  }
}
BENCHMARK(BM_Conv2dForward)->Arg(32)->Arg(128);

void BM_LenetTrainStep(benchmark::State& state) {
  const ModelSpec spec = ModelSpec::parse("lenet", {1, 28, 28}, 10);
  const ParamSet params = init_params(spec, 1);
  const Tensor x = random_tensor({128, 1, 28, 28}, 5);
  std::vector<int> y(128);
  Rng rng(6);
  for (auto& v : y) v = static_cast<int>(rng.below(10));
  for (auto _ : state) {
    Tape tape;
    ForwardGraph g = predict_graph(tape, spec, params, x);
    tape.backward(tape.softmax_cross_entropy(g.logits, y));
    benchmark::DoNotOptimize(tape.grad(g.input));
  }
}
BENCHMARK(BM_LenetTrainStep);

void BM_PgdStep(benchmark::State& state) {
  const ModelSpec spec = ModelSpec::parse("lenet", {1, 28, 28}, 10);
  const ParamSet params = init_params(spec, 1);
  const Tensor x = random_tensor({128, 1, 28, 28}, 7);
  std::vector<int> y(128);
  Rng rng(8);
  for (auto& v : y) v = static_cast<int>(rng.below(10));
  AttackConfig cfg;
  cfg.steps = 1;
  cfg.random_start = false;
  for (auto _ : state) {
    benchmark::DoNotOptimize(pgd(params, spec, x, y, cfg, 9));
  }
}
BENCHMARK(BM_PgdStep);

void BM_MagnitudePrune(benchmark::State& state) {
  const ModelSpec spec = ModelSpec::parse("mlp", {1, 28, 28}, 10);
  const ParamSet params = init_params(spec, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(magnitude_prune(params, 0.8, PruneScope::Global));
  }
}
BENCHMARK(BM_MagnitudePrune);

}  // namespace

BENCHMARK_MAIN();
