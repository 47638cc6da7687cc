// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "stam/tensor.hpp"

// Differentiable tensor operations. Each op computes its forward result
// eagerly and, when a Tape is active and some input requires a gradient,
// records a closure that accumulates input gradients during backward.
namespace stam::ops {

// Additive logit bias for blocked attention pairs. Softmax rows whose entries
// are all at or below kMaskedThreshold count as fully masked.
inline constexpr double kMaskSentinel = -1e9;
inline constexpr double kMaskedThreshold = kMaskSentinel / 2;

// a[..., m, k] x b[..., k, n]. Leading (batch) axes must match, or one side
// may be a plain matrix that is broadcast over the other's batch.
Tensor matmul(const Tensor& a, const Tensor& b);

// x[..., in] * w[in, out] + bias[out]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

Tensor transpose_last(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm);
Tensor reshape(const Tensor& x, Shape shape);

// Elementwise; `b` must equal `a` in shape or match a trailing suffix of it,
// in which case it is repeated over the leading axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor sum(const Tensor& x);
// Mean over `axis`; the axis is removed from the result shape.
Tensor mean(const Tensor& x, std::ptrdiff_t axis);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double negative_slope);
// Inverted dropout: survivors are scaled by 1 / (1 - rate). Returns `x`
// itself when not training or when rate == 0.
Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng);

Tensor concat(std::span<const Tensor> parts, std::ptrdiff_t axis);

// Softmax with max subtraction. Fully masked rows yield zeros and bump the
// thread-local counter read by masked_row_count().
Tensor softmax(const Tensor& x, std::ptrdiff_t axis);
// softmax(scale * x + bias) over the last axis in one pass. `bias` is a
// constant whose shape is a trailing suffix of x's (or undefined for none).
Tensor scaled_softmax(const Tensor& x, double scale, const Tensor& bias);
std::size_t masked_row_count();
void reset_masked_row_count();

// Normalises over the last axis, which `axis` must name.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps, std::ptrdiff_t axis = -1);

struct TemporalWindow {
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// x[C, T, N] or x[B, C, T, N]; weight[C_out, C / groups, k]; bias[C_out] or
// undefined. Only the temporal axis is convolved.
Tensor conv_temporal(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
                     std::size_t padding, std::size_t groups);

// Windowed max over the temporal axis of x[..., T, N]. Padding behaves as
// -infinity; gradient flows to the first maximal index of each window.
Tensor maxpool_temporal(const Tensor& x, const TemporalWindow& window);

// Keeps frames 0, stride, 2*stride, ... of x[..., T, N].
Tensor subsample_temporal(const Tensor& x, std::size_t stride);

// Mean categorical cross-entropy of logits[B, classes] against labels.
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

// Closed-form output length shared by conv and pool; throws DimensionError
// when the window does not fit.
std::size_t temporal_output_length(std::size_t frames, const TemporalWindow& window);

}  // namespace stam::ops
