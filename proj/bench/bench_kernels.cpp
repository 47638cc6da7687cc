// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

// Reference versus parallel kernels at the shapes of the default model, plus
// one full forward and backward pass.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "stam/kernels.hpp"
#include "stam/model.hpp"
#include "stam/ops.hpp"
#include "stam/runtime.hpp"

namespace {

using namespace stam;
using namespace stam::kernels;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

// Token projection (84x128 by 128x128) and the per-head score product
// (84x16 by 16x84, transposed B).
const GemmArgs kGemms[] = {{84, 128, 128, false, false, false}, {84, 84, 16, false, true, false}};

template <bool Parallel>
void BM_Gemm(benchmark::State& state) {
  const GemmArgs args = kGemms[state.range(0)];
  const auto a = random_values(args.m * args.k, 1);
  const auto b = random_values(args.k * args.n, 2);
  std::vector<double> c(args.m * args.n);
  for (auto _ : state) {
    if constexpr (Parallel) parallel::gemm(args, a, b, c);
    else reference::gemm(args, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * args.m * args.n * args.k));
}
BENCHMARK(BM_Gemm<false>)->Name("gemm/reference")->Arg(0)->Arg(1);
BENCHMARK(BM_Gemm<true>)->Name("gemm/parallel")->Arg(0)->Arg(1);

// Depthwise k=5 and pointwise 64->128 convolutions of the second block.
const ConvGeometry kConvs[] = {{64, 64, 4, 21, 5, 1, 2, 64}, {64, 128, 4, 21, 1, 1, 0, 1}};

template <bool Parallel>
void BM_Conv(benchmark::State& state) {
  const ConvGeometry g = kConvs[state.range(0)];
  const auto x = random_values(g.in_channels * g.frames * g.joints, 3);
  const auto w = random_values(g.out_channels * (g.in_channels / g.groups) * g.kernel, 4);
  const auto bias = random_values(g.out_channels, 5);
  std::vector<double> y(g.out_channels * g.out_frames() * g.joints);
  for (auto _ : state) {
    if constexpr (Parallel) parallel::conv_temporal(g, x, w, bias, y);
    else reference::conv_temporal(g, x, w, bias, y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Conv<false>)->Name("conv/reference")->Arg(0)->Arg(1);
BENCHMARK(BM_Conv<true>)->Name("conv/parallel")->Arg(0)->Arg(1);

// Attention weights of one batch: 8 trials x 8 heads x 84 rows of 84.
template <bool Parallel>
void BM_Softmax(benchmark::State& state) {
  const std::size_t rows = 8 * 8 * 84, cols = 84;
  const auto x = random_values(rows * cols, 6);
  std::vector<double> y(rows * cols);
  for (auto _ : state) {
    if constexpr (Parallel) parallel::softmax_rows(rows, cols, x, y, ops::kMaskedThreshold);
    else reference::softmax_rows(rows, cols, x, y, ops::kMaskedThreshold);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Softmax<false>)->Name("softmax/reference");
BENCHMARK(BM_Softmax<true>)->Name("softmax/parallel");

template <bool Parallel>
void BM_Layernorm(benchmark::State& state) {
  const std::size_t rows = 8 * 336, cols = 128;
  const auto x = random_values(rows * cols, 7);
  const auto gain = random_values(cols, 8);
  const auto bias = random_values(cols, 9);
  std::vector<double> y(rows * cols), mean(rows), rstd(rows);
  for (auto _ : state) {
    if constexpr (Parallel) parallel::layernorm_rows(rows, cols, x, gain, bias, 1e-5, y, mean, rstd);
    else reference::layernorm_rows(rows, cols, x, gain, bias, 1e-5, y, mean, rstd);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Layernorm<false>)->Name("layernorm/reference");
BENCHMARK(BM_Layernorm<true>)->Name("layernorm/parallel");

void BM_TrainStep(benchmark::State& state) {
  ModelConfig config;
  config.n_classes = 10;
  const StamModel model(config);
  const auto values = random_values(8 * 3 * 4 * 21, 10);
  const Tensor batch = Tensor::from({8, 3, 4, 21}, values);
  const std::vector<std::size_t> labels{0, 1, 2, 3, 4, 5, 6, 7};
  std::mt19937_64 rng(11);
  for (auto _ : state) {
    Tape tape;
    const Tensor loss = ops::cross_entropy(model.forward(batch, true, &rng), labels);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  stam::configure_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
