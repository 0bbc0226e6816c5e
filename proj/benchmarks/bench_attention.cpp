#include <benchmark/benchmark.h>

#include "oapt/cluster.hpp"
#include "oapt/model.hpp"
#include "oapt/rng.hpp"

using namespace oapt;

namespace {

Tensor random_tensor(std::vector<std::int64_t> shape, std::uint64_t seed, real scale = 1) {
  Rng rng(seed);
  std::vector<real> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = rng.normal() * scale;
  return Tensor::from_data(std::move(shape), std::move(v));
}

StlParams make_params(std::int64_t C, int heads, int win, std::uint64_t seed) {
  StlParams p;
  p.ln1_g = random_tensor({C}, seed + 10, 0.1);
  p.ln1_b = random_tensor({C}, seed + 11, 0.1);
  p.ln2_g = random_tensor({C}, seed + 12, 0.1);
  p.ln2_b = random_tensor({C}, seed + 13, 0.1);
  p.attn.wq = random_tensor({C, C}, seed, 0.3);
  p.attn.wk = random_tensor({C, C}, seed + 1, 0.3);
  p.attn.wv = random_tensor({C, C}, seed + 2, 0.3);
  p.attn.wo = random_tensor({C, C}, seed + 3, 0.3);
  p.attn.bq = random_tensor({C}, seed + 4, 0.1);
  p.attn.bk = random_tensor({C}, seed + 5, 0.1);
  p.attn.bv = random_tensor({C}, seed + 6, 0.1);
  p.attn.bo = random_tensor({C}, seed + 7, 0.1);
  p.attn.bias_table = random_tensor({(2 * win - 1) * (2 * win - 1), heads}, seed + 8, 0.3);
  p.attn.heads = heads;
  p.attn.window = win;
  p.fc1_w = random_tensor({2 * C, C}, seed + 14, 0.3);
  p.fc1_b = random_tensor({2 * C}, seed + 15, 0.1);
  p.fc2_w = random_tensor({C, 2 * C}, seed + 16, 0.3);
  p.fc2_b = random_tensor({C}, seed + 17, 0.1);
  return p;
}

}  // namespace

static void BM_window_attention(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  NoGradGuard ng;
  const StlParams p = make_params(32, 4, 4, 1);
  const Tensor x = random_tensor({32, n, n}, 2, 0.3);
  for (auto _ : state) {
    Tensor out = window_attention(x, p.attn, false);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_window_attention)->Arg(48)->Arg(96);

static void BM_stl_forward(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  NoGradGuard ng;
  const StlParams p = make_params(32, 4, 4, 3);
  const Tensor x = random_tensor({32, n, n}, 4, 0.3);
  for (auto _ : state) {
    Tensor out = stl_forward(x, p, true);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_stl_forward)->Arg(48)->Arg(96);

static void BM_pc_stl_forward(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  NoGradGuard ng;
  const StlParams p = make_params(32, 4, 4, 5);
  const Tensor x = random_tensor({32, n, n}, 6, 0.3);
  const ClusterLayout l = layout_for(4, 4, n, n);
  for (auto _ : state) {
    Tensor out = pc_stl_forward(x, p, l, true);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_pc_stl_forward)->Arg(48)->Arg(96);

static void BM_reconstructor_forward(benchmark::State& state) {
  NoGradGuard ng;
  ModelConfig cfg = ModelConfig::toy();
  Tape tape;
  Reconstructor net(cfg, tape, 1);
  const Tensor img = random_tensor({1, 48, 48}, 7, 0.2);
  for (auto _ : state) {
    Tensor out = net.forward(img, 4, 4);
    benchmark::DoNotOptimize(out);
  }
}
BENCHMARK(BM_reconstructor_forward);

BENCHMARK_MAIN();
