// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <random>

#include "stam/tensor.hpp"

namespace stam {

// Two depthwise-separable temporal blocks lifting the coordinate channels to
// the attention width. Kernels are odd so "same" padding keeps T at stride 1.
struct SepTcnConfig {
  std::size_t in_channels = 3;
  std::size_t mid_channels = 64;
  std::size_t out_channels = 128;
  std::size_t kernel1 = 3;
  std::size_t stride1 = 1;
  std::size_t kernel2 = 5;
  std::size_t stride2 = 1;
  std::size_t pool_kernel = 3;

  void validate() const;
  // Frame count after both blocks.
  std::size_t output_frames(std::size_t frames) const;
};

// Depthwise weight [C, 1, k]; pointwise and projection weights [C', C, 1].
// The projection is absent (undefined tensors) when C == C'.
struct SepTcnBlockParams {
  Tensor dw_weight;
  Tensor dw_bias;
  Tensor pw_weight;
  Tensor pw_bias;
  Tensor proj_weight;
  Tensor proj_bias;

  bool has_projection() const { return proj_weight.defined(); }
};

struct SepTcnParams {
  SepTcnBlockParams block1;
  SepTcnBlockParams block2;
};

// C*k + C + C*C' + C', plus C*C' + C' for the projection when C != C'.
std::size_t septcn_block_param_count(std::size_t in_channels, std::size_t out_channels, std::size_t kernel);

SepTcnBlockParams init_septcn_block(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                                    std::mt19937_64& rng);
SepTcnParams init_septcn(const SepTcnConfig& config, std::mt19937_64& rng);

// maxpool(relu(PW(DW(x)) + proj(subsample(x)))) on x[C, T, N] or x[B, C, T, N].
// The pool is k=pool_kernel, stride 1, same padding.
Tensor septcn_block(const Tensor& x, const SepTcnBlockParams& params, std::size_t stride,
                    std::size_t pool_kernel = 3);

Tensor septcn_forward(const Tensor& x, const SepTcnConfig& config, const SepTcnParams& params);

// [C, T, N] -> [T*N, C] (or batched [B, C, T, N] -> [B, T*N, C]); token
// (t, i) lands on row t*N + i.
Tensor tokens_from_features(const Tensor& features);
// Inverse of tokens_from_features.
Tensor features_from_tokens(const Tensor& tokens, std::size_t frames, std::size_t joints);

}  // namespace stam
