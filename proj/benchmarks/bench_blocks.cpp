// Copyright 2026 The MUSE Desk Authors
// SPDX-License-Identifier: Apache-2.0

// Wall-clock microbenchmarks for the sequence mixers. Token counts are
// multiples of the 255 tokens a {1,3,7,14} pyramid yields per frame.

#include <benchmark/benchmark.h>

#include "muse/ops.hpp"
#include "muse/ssm.hpp"

namespace {

using namespace muse;

constexpr std::size_t kTokensPerFrame = 255;

void layer_forward(benchmark::State& state, BlockKind kind) {
  const std::size_t L = static_cast<std::size_t>(state.range(0)) * kTokensPerFrame;
  SsmConfig cfg;
  cfg.channels = 32;
  cfg.layers = 1;
  cfg.variant = ScanVariant::None;
  cfg.kind = kind;
  Rng rng(0);
  ParamStore store;
  const ResMambaStack stack = init_res_mamba(store, cfg, rng);
  const Tensor x = rng.normal_tensor({L, cfg.channels});
  for (auto _ : state) {
    Graph g;
    benchmark::DoNotOptimize(res_mamba_layer(g.constant(x), store, stack.layers[0], cfg).value().ptr());
  }
  state.counters["tokens"] = static_cast<double>(L);
  state.SetComplexityN(static_cast<int64_t>(L));
}

void BM_MambaLayer(benchmark::State& s) { layer_forward(s, BlockKind::Mamba); }
void BM_MambaOutLayer(benchmark::State& s) { layer_forward(s, BlockKind::MambaOut); }
void BM_AttentionLayer(benchmark::State& s) { layer_forward(s, BlockKind::Attention); }

BENCHMARK(BM_MambaLayer)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->Complexity(benchmark::oN);
BENCHMARK(BM_MambaOutLayer)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->Complexity(benchmark::oN);
BENCHMARK(BM_AttentionLayer)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->Complexity(benchmark::oNSquared);

// The bare scan, forward and backward.
void BM_SelectiveScanTrain(benchmark::State& state) {
  const std::size_t L = static_cast<std::size_t>(state.range(0)), E = 64, N = 16;
  Rng rng(1);
  const Tensor u = rng.normal_tensor({L, E});
  Tensor delta(Shape{L, E});
  for (double& d : delta.data()) d = rng.uniform(0.01, 0.5);
  Tensor A(Shape{E, N});
  for (double& a : A.data()) a = -rng.uniform(0.5, 4.0);
  const Tensor B = rng.normal_tensor({L, N});
  const Tensor C = rng.normal_tensor({L, N});
  for (auto _ : state) {
    Graph g(Graph::Mode::Training);
    Var y = ops::selective_scan(g.variable(u), g.variable(delta), g.variable(A), g.variable(B), g.variable(C));
    g.backward(ops::sum(y));
  }
  state.SetComplexityN(static_cast<int64_t>(L));
}
BENCHMARK(BM_SelectiveScanTrain)->RangeMultiplier(2)->Range(256, 4096)->Unit(benchmark::kMillisecond)->Complexity(benchmark::oN);

}  // namespace

BENCHMARK_MAIN();
