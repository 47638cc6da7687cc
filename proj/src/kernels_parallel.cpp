// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "stam/kernels.hpp"

namespace stam::kernels::parallel {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

constexpr std::size_t kRowTile = 8;
constexpr std::size_t kColTile = 16;

using TileAcc = double[kRowTile][kColTile];

void transpose(std::size_t rows, std::size_t cols, const double* src, double* dst) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t rb = 0; rb < rows; rb += kBlock) {
    for (std::size_t cb = 0; cb < cols; cb += kBlock) {
      const std::size_t re = std::min(rb + kBlock, rows);
      const std::size_t ce = std::min(cb + kBlock, cols);
      for (std::size_t r = rb; r < re; ++r) {
        for (std::size_t c = cb; c < ce; ++c) dst[c * rows + r] = src[r * cols + c];
      }
    }
  }
}

// acc[r][j] = sum_p a[r * k + p] * b[p * ldb + j] for r < R, j < 16,
// accumulated in increasing p.
template <std::size_t R>
inline void micro_tile(std::size_t k, const double* a, const double* b, std::size_t ldb, TileAcc& acc) {
  double local[R][kColTile] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * ldb;
    for (std::size_t r = 0; r < R; ++r) {
      const double v = a[r * k + p];
#pragma omp simd
      for (std::size_t j = 0; j < kColTile; ++j) local[r][j] += v * brow[j];
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t j = 0; j < kColTile; ++j) acc[r][j] = local[r][j];
  }
}

inline void run_tile(std::size_t rows, std::size_t k, const double* a, const double* b, std::size_t ldb,
                     TileAcc& acc) {
  switch (rows) {
    case 8: micro_tile<8>(k, a, b, ldb, acc); break;
    case 7: micro_tile<7>(k, a, b, ldb, acc); break;
    case 6: micro_tile<6>(k, a, b, ldb, acc); break;
    case 5: micro_tile<5>(k, a, b, ldb, acc); break;
    case 4: micro_tile<4>(k, a, b, ldb, acc); break;
    case 3: micro_tile<3>(k, a, b, ldb, acc); break;
    case 2: micro_tile<2>(k, a, b, ldb, acc); break;
    default: micro_tile<1>(k, a, b, ldb, acc); break;
  }
}

thread_local std::vector<double> t_panel;

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
             bool accumulate) {
  const std::size_t row_tiles = (m + kRowTile - 1) / kRowTile;
  const std::size_t col_tiles = (n + kColTile - 1) / kColTile;
  const auto tiles = static_cast<std::ptrdiff_t>(row_tiles * col_tiles);
#pragma omp parallel for schedule(static) if (m * n * k > kParallelWork)
  for (std::ptrdiff_t tile = 0; tile < tiles; ++tile) {
    const std::size_t i0 = static_cast<std::size_t>(tile) / col_tiles * kRowTile;
    const std::size_t j0 = static_cast<std::size_t>(tile) % col_tiles * kColTile;
    const std::size_t rows = std::min(kRowTile, m - i0);
    const std::size_t cols = std::min(kColTile, n - j0);
    const double* panel = b + j0;
    std::size_t ldb = n;
    if (cols < kColTile) {
      // Ragged right edge: zero-pad the B panel to a full tile width.
      t_panel.resize(k * kColTile);
      for (std::size_t p = 0; p < k; ++p) {
        double* dst = t_panel.data() + p * kColTile;
        std::copy_n(b + p * n + j0, cols, dst);
        std::fill(dst + cols, dst + kColTile, 0.0);
      }
      panel = t_panel.data();
      ldb = kColTile;
    }
    TileAcc acc;
    run_tile(rows, k, a + i0 * k, panel, ldb, acc);
    for (std::size_t r = 0; r < rows; ++r) {
      double* crow = c + (i0 + r) * n + j0;
      if (accumulate) {
        for (std::size_t j = 0; j < cols; ++j) crow[j] += acc[r][j];
      } else {
        for (std::size_t j = 0; j < cols; ++j) crow[j] = acc[r][j];
      }
    }
  }
}

thread_local std::vector<double> t_scratch_a;
thread_local std::vector<double> t_scratch_b;

}  // namespace

int max_threads() { return omp_get_max_threads(); }

void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  const double* a_ptr = a.data();
  const double* b_ptr = b.data();
  if (args.trans_a) {
    t_scratch_a.resize(args.m * args.k);
    transpose(args.k, args.m, a_ptr, t_scratch_a.data());
    a_ptr = t_scratch_a.data();
  }
  if (args.trans_b) {
    t_scratch_b.resize(args.k * args.n);
    transpose(args.n, args.k, b_ptr, t_scratch_b.data());
    b_ptr = t_scratch_b.data();
  }
  gemm_nn(args.m, args.n, args.k, a_ptr, b_ptr, c.data(), args.accumulate);
}

void conv_temporal(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                   std::span<const double> bias, std::span<double> y) {
  const std::size_t out_frames = g.out_frames();
  const std::size_t plane = out_frames * g.joints;

  if (g.groups == 1 && g.kernel == 1 && g.stride == 1 && g.padding == 0) {
    // Pointwise: y[C_out, T*N] = W[C_out, C_in] * x[C_in, T*N] + bias.
    gemm({.m = g.out_channels, .n = plane, .k = g.in_channels}, w, x, y);
    if (!bias.empty()) {
      for (std::size_t co = 0; co < g.out_channels; ++co) {
        double* row = y.data() + co * plane;
        for (std::size_t q = 0; q < plane; ++q) row[q] += bias[co];
      }
    }
    return;
  }

  const std::size_t in_per_group = g.in_channels / g.groups;
  const std::size_t out_per_group = g.out_channels / g.groups;
  const auto out_channels = static_cast<std::ptrdiff_t>(g.out_channels);
#pragma omp parallel for schedule(static) if (g.out_channels * plane * g.kernel * in_per_group > kParallelWork)
  for (std::ptrdiff_t co_i = 0; co_i < out_channels; ++co_i) {
    const auto co = static_cast<std::size_t>(co_i);
    const std::size_t group = co / out_per_group;
    double* out = y.data() + co * plane;
    std::fill(out, out + plane, bias.empty() ? 0.0 : bias[co]);
    for (std::size_t ci = 0; ci < in_per_group; ++ci) {
      const double* in = x.data() + (group * in_per_group + ci) * g.frames * g.joints;
      const double* taps = w.data() + (co * in_per_group + ci) * g.kernel;
      for (std::size_t t = 0; t < out_frames; ++t) {
        double* out_row = out + t * g.joints;
        for (std::size_t j = 0; j < g.kernel; ++j) {
          const auto src = static_cast<std::ptrdiff_t>(t * g.stride + j) - static_cast<std::ptrdiff_t>(g.padding);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(g.frames)) continue;
          const double tap = taps[j];
          const double* in_row = in + static_cast<std::size_t>(src) * g.joints;
#pragma omp simd
          for (std::size_t n = 0; n < g.joints; ++n) out_row[n] += tap * in_row[n];
        }
      }
    }
  }
}

std::size_t softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x, std::span<double> y,
                         double masked_threshold) {
  std::size_t all_masked = 0;
  const auto n_rows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) reduction(+ : all_masked) if (rows * cols > kParallelWork)
  for (std::ptrdiff_t r = 0; r < n_rows; ++r) {
    const double* in = x.data() + static_cast<std::size_t>(r) * cols;
    double* out = y.data() + static_cast<std::size_t>(r) * cols;
    const double peak = *std::max_element(in, in + cols);
    if (peak <= masked_threshold) {
      std::fill(out, out + cols, 0.0);
      ++all_masked;
      continue;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      // exp underflows to exactly zero far below the peak; skip the slow path.
      const double d = in[j] - peak;
      out[j] = d < -750.0 ? 0.0 : std::exp(d);
      total += out[j];
    }
    const double inv = 1.0 / total;
    for (std::size_t j = 0; j < cols; ++j) out[j] *= inv;
  }
  return all_masked;
}

void layernorm_rows(std::size_t rows, std::size_t cols, std::span<const double> x, std::span<const double> gain,
                    std::span<const double> bias, double eps, std::span<double> y, std::span<double> mean,
                    std::span<double> rstd) {
  const auto n_rows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::ptrdiff_t r_i = 0; r_i < n_rows; ++r_i) {
    const auto r = static_cast<std::size_t>(r_i);
    const double* in = x.data() + r * cols;
    double* out = y.data() + r * cols;
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += in[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
#pragma omp simd
    for (std::size_t j = 0; j < cols; ++j) out[j] = (in[j] - mu) * inv * gain[j] + bias[j];
    mean[r] = mu;
    rstd[r] = inv;
  }
}

}  // namespace stam::kernels::parallel
