#include <benchmark/benchmark.h>

#include "oapt/degrade.hpp"
#include "oapt/jpeg.hpp"
#include "oapt/rng.hpp"

using namespace oapt;

static void BM_dct8x8(benchmark::State& state) {
  Rng rng(1);
  real block[64], freq[64];
  for (auto& v : block) v = rng.normal() * 40;
  for (auto _ : state) {
    dct8x8(block, freq);
    benchmark::DoNotOptimize(freq);
  }
}
BENCHMARK(BM_dct8x8);

static void BM_idct8x8(benchmark::State& state) {
  Rng rng(2);
  real freq[64], block[64];
  for (auto& v : freq) v = rng.normal() * 40;
  for (auto _ : state) {
    idct8x8(freq, block);
    benchmark::DoNotOptimize(block);
  }
}
BENCHMARK(BM_idct8x8);

static void BM_jpeg_compress(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  const Plane img = make_test_image(n, n, 3);
  for (auto _ : state) {
    Plane out = jpeg_compress(img, 50);
    benchmark::DoNotOptimize(out);
  }
  state.SetBytesProcessed(state.iterations() * n * n);
}
BENCHMARK(BM_jpeg_compress)->Arg(64)->Arg(128)->Arg(256);

static void BM_double_jpeg(benchmark::State& state) {
  const std::int64_t n = state.range(0);
  const Plane img = make_test_image(n, n, 4);
  const CompressionSpec spec{30, 50, 4, 4};
  for (auto _ : state) {
    DegradedPair pair = double_jpeg(img, spec);
    benchmark::DoNotOptimize(pair);
  }
}
BENCHMARK(BM_double_jpeg)->Arg(64)->Arg(128);

BENCHMARK_MAIN();
