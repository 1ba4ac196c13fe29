#include <benchmark/benchmark.h>

#include "fedpg/builders.hpp"
#include "fedpg/exact_eval.hpp"
#include "fedpg/fed_optimizer.hpp"
#include "fedpg/sampling.hpp"

using namespace fedpg;

namespace {

void BM_ExactGradient(benchmark::State& state) {
  const int ns = static_cast<int>(state.range(0));
  const FrlInstance inst = build_synthetic(10, ns, 4, 0.3, 1);
  const Theta th = Theta::Constant(ns, 4, 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(exact_gradient(inst, th, Variant::r(0.05)));
}
BENCHMARK(BM_ExactGradient)->Arg(5)->Arg(20)->Arg(80);

void BM_Estimator(benchmark::State& state) {
  const FrlInstance inst = build_synthetic(1, 5, 4, 0.3, 2);
  const Theta th = Theta::Zero(5, 4);
  const BitCodec codec(2);
  const Theta tb = Theta::Zero(codec.ext_rows(5), 2);
  std::uint64_t r = 0;
  for (auto _ : state) {
    const StreamKey key{1, r++, 0, 0};
    if (state.range(0) == 0) {
      benchmark::DoNotOptimize(reinforce_grad_sm(inst.front(), th, 10, 50, key));
    } else if (state.range(0) == 1) {
      benchmark::DoNotOptimize(reinforce_grad_reg(inst.front(), th, 10, 50, 0.05, key));
    } else {
      benchmark::DoNotOptimize(reinforce_grad_bit(inst.front(), tb, codec, 10, 50, 0.05, key));
    }
  }
  state.SetItemsProcessed(state.iterations() * 10);
}
BENCHMARK(BM_Estimator)->DenseRange(0, 2);

void BM_FedPgRound(benchmark::State& state) {
  const FrlInstance inst = build_synthetic(static_cast<int>(state.range(0)), 5, 4, 0.3, 3);
  FedPgConfig cfg;
  cfg.variant = PgVariant::RS;
  cfg.rounds = 1;
  for (auto _ : state) benchmark::DoNotOptimize(run_fedpg(inst, cfg));
}
BENCHMARK(BM_FedPgRound)->Arg(2)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
