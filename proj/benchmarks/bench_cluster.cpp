#include <benchmark/benchmark.h>

#include "oapt/cluster.hpp"
#include "oapt/rng.hpp"

using namespace oapt;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<real> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.normal();
  return Tensor::from_data(std::move(shape), std::move(v));
}

}  // namespace

static void BM_layout_for(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  for (auto _ : state) {
    ClusterLayout l = layout_for(3, 5, n, n);
    benchmark::DoNotOptimize(l);
  }
}
BENCHMARK(BM_layout_for)->Arg(48)->Arg(128)->Arg(512);

static void BM_pc_roundtrip(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  const Tensor x = random_tensor({32, n, n}, 1);
  const ClusterLayout l = layout_for(3, 5, n, n);
  for (auto _ : state) {
    Tensor back = inv_pc(pc(x, l));
    benchmark::DoNotOptimize(back);
  }
  state.SetBytesProcessed(state.iterations() * 32 * n * n *
                          static_cast<std::int64_t>(sizeof(real)));
}
BENCHMARK(BM_pc_roundtrip)->Arg(48)->Arg(128);

static void BM_identity_hooks(benchmark::State& state) {
  // degenerate (0,0) layout through plugin hooks: handle passthrough, no copies
  const std::int64_t n = state.range(0);
  const Tensor x = random_tensor({32, n, n}, 2);
  const PluginHooks hooks = plugin_hooks(layout_for(0, 0, n, n));
  for (auto _ : state) {
    Tensor back = hooks.post(hooks.pre(x));
    benchmark::DoNotOptimize(back);
  }
}
BENCHMARK(BM_identity_hooks)->Arg(128);

BENCHMARK_MAIN();
