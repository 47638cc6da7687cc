// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <random>
#include <vector>

#include "stam/kernels.hpp"
#include "stam/ops.hpp"

namespace stam::kernels {
namespace {

std::vector<double> random_values(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

// Both flavours reduce in the same order; the bound only absorbs fused
// multiply-add contraction differences.
void expect_close(const std::vector<double>& a, const std::vector<double>& b, double scale) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], 1e-13 * scale) << "index " << i;
}

class ThreadCount {
 public:
  explicit ThreadCount(int n) : saved_(omp_get_max_threads()) { omp_set_num_threads(n); }
  ~ThreadCount() { omp_set_num_threads(saved_); }

 private:
  int saved_;
};

TEST(Kernels, GemmMatchesReference) {
  std::mt19937_64 rng(1);
  const std::size_t dims[][3] = {{1, 1, 1}, {3, 5, 7}, {8, 16, 4}, {9, 17, 33}, {84, 16, 128}, {84, 84, 16}, {13, 130, 70}};
  for (const auto& d : dims) {
    for (int flags = 0; flags < 8; ++flags) {
      GemmArgs args{d[0], d[1], d[2], (flags & 1) != 0, (flags & 2) != 0, (flags & 4) != 0};
      const auto a = random_values(args.m * args.k, rng);
      const auto b = random_values(args.k * args.n, rng);
      const auto c0 = random_values(args.m * args.n, rng);
      auto c_ref = c0;
      auto c_par = c0;
      reference::gemm(args, a, b, c_ref);
      parallel::gemm(args, a, b, c_par);
      expect_close(c_ref, c_par, static_cast<double>(args.k + 1));
    }
  }
}

TEST(Kernels, ConvMatchesReference) {
  std::mt19937_64 rng(2);
  const ConvGeometry geometries[] = {
      {3, 64, 4, 21, 1, 1, 0, 1},  {64, 64, 4, 21, 5, 1, 2, 64}, {64, 128, 4, 21, 1, 1, 0, 1},
      {4, 6, 7, 3, 3, 2, 1, 2},    {5, 5, 8, 2, 5, 3, 2, 5},     {2, 3, 1, 4, 1, 1, 0, 1},
  };
  for (const auto& g : geometries) {
    const auto x = random_values(g.in_channels * g.frames * g.joints, rng);
    const auto w = random_values(g.out_channels * (g.in_channels / g.groups) * g.kernel, rng);
    const auto bias = random_values(g.out_channels, rng);
    std::vector<double> y_ref(g.out_channels * g.out_frames() * g.joints);
    auto y_par = y_ref;
    reference::conv_temporal(g, x, w, bias, y_ref);
    parallel::conv_temporal(g, x, w, bias, y_par);
    expect_close(y_ref, y_par, static_cast<double>(g.in_channels * g.kernel + 1));
  }
}

TEST(Kernels, SoftmaxMatchesReferenceIncludingMaskedRows) {
  std::mt19937_64 rng(3);
  const std::size_t rows = 37, cols = 84;
  auto x = random_values(rows * cols, rng);
  for (std::size_t c = 0; c < cols; ++c) x[5 * cols + c] = ops::kMaskSentinel;
  for (std::size_t c = 0; c < cols; c += 2) x[7 * cols + c] = ops::kMaskSentinel;
  std::vector<double> y_ref(rows * cols), y_par(rows * cols);
  const auto masked_ref = reference::softmax_rows(rows, cols, x, y_ref, ops::kMaskedThreshold);
  const auto masked_par = parallel::softmax_rows(rows, cols, x, y_par, ops::kMaskedThreshold);
  EXPECT_EQ(masked_ref, 1u);
  EXPECT_EQ(masked_par, 1u);
  expect_close(y_ref, y_par, 1.0);
  for (std::size_t c = 0; c < cols; c += 2) EXPECT_EQ(y_par[7 * cols + c], 0.0);
}

TEST(Kernels, LayernormMatchesReference) {
  std::mt19937_64 rng(4);
  const std::size_t rows = 29, cols = 128;
  const auto x = random_values(rows * cols, rng);
  const auto gain = random_values(cols, rng);
  const auto bias = random_values(cols, rng);
  std::vector<double> y_ref(rows * cols), y_par(rows * cols), m_ref(rows), m_par(rows), r_ref(rows), r_par(rows);
  reference::layernorm_rows(rows, cols, x, gain, bias, 1e-5, y_ref, m_ref, r_ref);
  parallel::layernorm_rows(rows, cols, x, gain, bias, 1e-5, y_par, m_par, r_par);
  expect_close(y_ref, y_par, 10.0);
  expect_close(m_ref, m_par, 1.0);
  expect_close(r_ref, r_par, 10.0);
}

TEST(Kernels, ParallelResultsIndependentOfThreadCount) {
  std::mt19937_64 rng(5);
  const GemmArgs args{84, 84, 16, false, true, false};
  const auto a = random_values(args.m * args.k, rng);
  const auto b = random_values(args.k * args.n, rng);
  const ConvGeometry g{64, 128, 4, 21, 1, 1, 0, 1};
  const auto x = random_values(g.in_channels * g.frames * g.joints, rng);
  const auto w = random_values(g.out_channels * g.in_channels, rng);
  const auto bias = random_values(g.out_channels, rng);

  auto run = [&](int threads) {
    ThreadCount guard(threads);
    std::vector<double> c(args.m * args.n);
    parallel::gemm(args, a, b, c);
    std::vector<double> y(g.out_channels * g.out_frames() * g.joints);
    parallel::conv_temporal(g, x, w, bias, y);
    std::vector<double> s(args.m * args.n);
    parallel::softmax_rows(args.m, args.n, c, s, ops::kMaskedThreshold);
    c.insert(c.end(), y.begin(), y.end());
    c.insert(c.end(), s.begin(), s.end());
    return c;
  };
  const auto one = run(1);
  EXPECT_EQ(one, run(2));
  EXPECT_EQ(one, run(4));
}

}  // namespace
}  // namespace stam::kernels
