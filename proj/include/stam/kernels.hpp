// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

// Raw numeric kernels behind the differentiable ops. Every kernel exists in
// two flavours with identical signatures:
//
//   reference::  straight loops, single-threaded, the test oracle
//   parallel::   blocked + OpenMP, used by the ops layer
//
// Parallel kernels only split work across independent output elements, so
// every output is reduced in a fixed order and results do not depend on the
// thread count.
namespace stam::kernels {

// Row-major matrix multiply, C (+)= op(A) * op(B) with op(A) m x k and
// op(B) k x n. A transposed A is stored k x m; a transposed B is stored n x k.
struct GemmArgs {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  bool trans_a = false;
  bool trans_b = false;
  bool accumulate = false;
};

// Temporal convolution geometry for x laid out [C_in, T, N].
struct ConvGeometry {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t frames = 0;  // T
  std::size_t joints = 0;  // N
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;

  std::size_t out_frames() const { return (frames + 2 * padding - kernel) / stride + 1; }
};

namespace reference {

void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b, std::span<double> c);

// y[co, t', n] = bias[co] + sum_{ci in group, j} w[co, ci, j] * x[ci, t'*s - p + j, n]
// with weights laid out [C_out, C_in / groups, kernel].
void conv_temporal(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                   std::span<const double> bias, std::span<double> y);

// Row-wise softmax with max subtraction. Rows whose entries all lie at or
// below `masked_threshold` produce zeros; the number of such rows is returned.
std::size_t softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x, std::span<double> y,
                         double masked_threshold);

// Row-wise normalisation; also stores per-row mean and 1/sqrt(var + eps).
void layernorm_rows(std::size_t rows, std::size_t cols, std::span<const double> x, std::span<const double> gain,
                    std::span<const double> bias, double eps, std::span<double> y, std::span<double> mean,
                    std::span<double> rstd);

}  // namespace reference

namespace parallel {

void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b, std::span<double> c);
void conv_temporal(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                   std::span<const double> bias, std::span<double> y);
std::size_t softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x, std::span<double> y,
                         double masked_threshold);
void layernorm_rows(std::size_t rows, std::size_t cols, std::span<const double> x, std::span<const double> gain,
                    std::span<const double> bias, double eps, std::span<double> y, std::span<double> mean,
                    std::span<double> rstd);

int max_threads();

}  // namespace parallel

}  // namespace stam::kernels
