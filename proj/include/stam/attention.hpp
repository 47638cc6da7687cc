// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <random>

#include "stam/embedding.hpp"
#include "stam/tensor.hpp"

namespace stam {

// kAdditive biases blocked logits by ops::kMaskSentinel before the softmax;
// kMultiplicative zeroes blocked weights after it (rows then sum to < 1).
enum class MaskMode { kAdditive, kMultiplicative };

struct AttentionConfig {
  std::size_t channels = 128;
  std::size_t heads = 8;
  std::size_t head_dim = 16;
  bool scaled = true;         // multiply logits by 1/sqrt(head_dim)
  bool residual_norm = true;  // LayerNorm(x + attention(x))
  MaskMode mask_mode = MaskMode::kAdditive;
  double norm_eps = 1e-5;

  void validate() const;
  double logit_scale() const;
};

// Head m owns columns [m*d, (m+1)*d) of w_q, w_k and w_v, and rows
// [m*d, (m+1)*d) of w_o.
struct MhsaParams {
  Tensor w_q;  // [C, M*d]
  Tensor w_k;
  Tensor w_v;
  Tensor w_o;  // [M*d, C]
  Tensor b_o;  // [C]
  Tensor norm_gain;  // [C], undefined without residual_norm
  Tensor norm_bias;
};

MhsaParams init_mhsa(const AttentionConfig& config, std::mt19937_64& rng);

// 3*M*C*d + M*d*C + C, plus 2C for the norm.
std::size_t mhsa_param_count(const AttentionConfig& config);

// One head on x[L, C]: softmax_rows(scale * (x Wq)(x Wk)^T (+ mask)) (x Wv).
Tensor single_head(const Tensor& x, const Tensor& w_q, const Tensor& w_k, const Tensor& w_v,
                   const AttentionMask& mask, double scale, MaskMode mode = MaskMode::kAdditive);

// Concatenated head outputs before the output projection: [..., L, M*d].
Tensor mhsa_heads(const Tensor& x, const MhsaParams& params, const AttentionMask& mask,
                  const AttentionConfig& config);

// Full block on x[L, C] or x[B, L, C].
Tensor mhsa(const Tensor& x, const MhsaParams& params, const AttentionMask& mask, const AttentionConfig& config);

// Post-mask, post-softmax weights of `head`: [L, L] (or [B, L, L]).
Tensor attention_weights(const Tensor& x, const MhsaParams& params, const AttentionMask& mask,
                         const AttentionConfig& config, std::size_t head);

}  // namespace stam
