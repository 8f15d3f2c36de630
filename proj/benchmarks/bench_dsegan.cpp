#include <benchmark/benchmark.h>

#include "dsegan/adversarial.hpp"
#include "dsegan/dse.hpp"
#include "dsegan/ops.hpp"
#include "dsegan/random.hpp"
#include "dsegan/sama.hpp"

using namespace dsegan;

namespace {

struct RecomposeFixture {
  DseParams p;
  Tensor gated, prev, agg;

  explicit RecomposeFixture(RandomSource& rng)
      : p(DseParams::init(rng, 16, 64, 4, {1, 2, 4, 8}, 8)),
        gated(rng.uniform_tensor({8, 64}, -1.0f, 1.0f)),
        prev(rng.uniform_tensor({8, 64}, -1.0f, 1.0f)),
        agg(rng.uniform_tensor({4, 64}, -1.0f, 1.0f)) {}
};

}  // namespace

static void BM_MatMul256(benchmark::State& state) {
  RandomSource rng(1);
  Tensor a = rng.uniform_tensor({256, 256}, -1.0f, 1.0f);
  Tensor b = rng.uniform_tensor({256, 256}, -1.0f, 1.0f);
  for (auto _ : state) {
    benchmark::DoNotOptimize(matmul(a, b));
  }
}
BENCHMARK(BM_MatMul256);

static void BM_RecomposeNaive(benchmark::State& state) {
  RandomSource rng(2);
  RecomposeFixture f(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(recompose_naive(f.gated, f.prev, f.agg, f.p));
  }
}
BENCHMARK(BM_RecomposeNaive);

static void BM_RecomposeMasked(benchmark::State& state) {
  RandomSource rng(2);
  RecomposeFixture f(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(recompose_masked(f.gated, f.prev, f.agg, f.p));
  }
}
BENCHMARK(BM_RecomposeMasked);

static void BM_DseForward(benchmark::State& state) {
  RandomSource rng(3);
  DseParams p = DseParams::init(rng, 32, 64, 4, {1, 2, 4, 8}, 8);
  TextFeatures text;
  text.words = rng.uniform_tensor({8, 64}, -1.0f, 1.0f);
  text.sentence = rng.uniform_tensor({64}, -1.0f, 1.0f);
  ImageFeatureMap img;
  img.tokens = rng.uniform_tensor({64, 32}, -1.0f, 1.0f);
  img.h = 8;
  img.w = 8;
  for (auto _ : state) {
    benchmark::DoNotOptimize(dse_forward(text, img, p));
  }
}
BENCHMARK(BM_DseForward);

static void BM_GeneratorForwardToy(benchmark::State& state) {
  RandomSource rng(4);
  StageConfig cfg;
  cfg.num_stages = 4;
  cfg.base_grid = 8;
  cfg.d0 = 64;
  GeneratorParams p = GeneratorParams::init(rng, cfg, 64, 4, {64, 32, 16, 8, 4, 2}, 8);
  TextFeatures text;
  text.words = rng.uniform_tensor({8, 64}, -1.0f, 1.0f);
  text.sentence = rng.uniform_tensor({64}, -1.0f, 1.0f);
  Tensor z = rng.gaussian_tensor({cfg.d_z});
  Tensor noise = rng.gaussian_tensor({cfg.d_ca});
  for (auto _ : state) {
    benchmark::DoNotOptimize(generator_forward(z, noise, text, p));
  }
}
BENCHMARK(BM_GeneratorForwardToy);

static void BM_DiscriminateToy(benchmark::State& state) {
  RandomSource rng(5);
  DiscriminatorParams p = DiscriminatorParams::init(rng, 64, 64, 16, 128);
  Tensor img = rng.uniform_tensor({64 * 64, 3}, -1.0f, 1.0f);
  Tensor sent = rng.uniform_tensor({64}, -1.0f, 1.0f);
  for (auto _ : state) {
    benchmark::DoNotOptimize(discriminate(img, sent, p));
  }
}
BENCHMARK(BM_DiscriminateToy);

BENCHMARK_MAIN();
