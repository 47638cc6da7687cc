// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "stam/kernels.hpp"

namespace stam::kernels::reference {

void gemm(const GemmArgs& args, std::span<const double> a, std::span<const double> b, std::span<double> c) {
  const auto [m, n, k, trans_a, trans_b, accumulate] = args;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = trans_a ? a[p * m + i] : a[i * k + p];
        const double bv = trans_b ? b[j * k + p] : b[p * n + j];
        sum += av * bv;
      }
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

void conv_temporal(const ConvGeometry& g, std::span<const double> x, std::span<const double> w,
                   std::span<const double> bias, std::span<double> y) {
  const std::size_t out_frames = g.out_frames();
  const std::size_t in_per_group = g.in_channels / g.groups;
  const std::size_t out_per_group = g.out_channels / g.groups;
  for (std::size_t co = 0; co < g.out_channels; ++co) {
    const std::size_t group = co / out_per_group;
    for (std::size_t t = 0; t < out_frames; ++t) {
      for (std::size_t n = 0; n < g.joints; ++n) {
        double sum = bias.empty() ? 0.0 : bias[co];
        for (std::size_t ci = 0; ci < in_per_group; ++ci) {
          const std::size_t channel = group * in_per_group + ci;
          for (std::size_t j = 0; j < g.kernel; ++j) {
            const auto src = static_cast<std::ptrdiff_t>(t * g.stride + j) - static_cast<std::ptrdiff_t>(g.padding);
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(g.frames)) continue;
            sum += w[(co * in_per_group + ci) * g.kernel + j] *
                   x[(channel * g.frames + static_cast<std::size_t>(src)) * g.joints + n];
          }
        }
        y[(co * out_frames + t) * g.joints + n] = sum;
      }
    }
  }
}

std::size_t softmax_rows(std::size_t rows, std::size_t cols, std::span<const double> x, std::span<double> y,
                         double masked_threshold) {
  std::size_t all_masked = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * cols;
    double* out = y.data() + r * cols;
    const double peak = *std::max_element(in, in + cols);
    if (peak <= masked_threshold) {
      std::fill(out, out + cols, 0.0);
      ++all_masked;
      continue;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      out[j] = std::exp(in[j] - peak);
      total += out[j];
    }
    for (std::size_t j = 0; j < cols; ++j) out[j] /= total;
  }
  return all_masked;
}

void layernorm_rows(std::size_t rows, std::size_t cols, std::span<const double> x, std::span<const double> gain,
                    std::span<const double> bias, double eps, std::span<double> y, std::span<double> mean,
                    std::span<double> rstd) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * cols;
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += in[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] = (in[j] - mu) * inv * gain[j] + bias[j];
    mean[r] = mu;
    rstd[r] = inv;
  }
}

}  // namespace stam::kernels::reference
