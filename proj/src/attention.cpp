// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include "stam/attention.hpp"

#include <cmath>

#include "stam/error.hpp"
#include "stam/ops.hpp"

namespace stam {
namespace {

Tensor xavier(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(fan_in * fan_out);
  for (auto& v : values) v = dist(rng);
  return Tensor::from({fan_in, fan_out}, std::move(values), true);
}

void check_tokens(const Tensor& x, const AttentionMask& mask, std::size_t channels) {
  if (x.rank() != 2 && x.rank() != 3) throw DimensionError("attention expects [L, C] or [B, L, C], got " + to_string(x.shape()));
  if (x.dim(-2) != mask.tokens()) {
    throw ContractError("mask covers " + std::to_string(mask.tokens()) + " tokens but input has " +
                        std::to_string(x.dim(-2)));
  }
  if (x.dim(-1) != channels) {
    throw DimensionError("attention expects " + std::to_string(channels) + " channels, got " + to_string(x.shape()));
  }
}

// Scales and masks raw logits [..., L, L] and returns attention weights.
Tensor masked_softmax(const Tensor& logits, double scale, const AttentionMask& mask, MaskMode mode) {
  if (mode == MaskMode::kAdditive) return ops::scaled_softmax(logits, scale, mask.additive_bias());
  return ops::mul(ops::scaled_softmax(logits, scale, Tensor()), mask.keep());
}

// [B, L, M*d] -> [B, M, L, d]
Tensor split_heads(const Tensor& t, std::size_t heads, std::size_t head_dim) {
  const std::size_t batch = t.dim(0);
  const std::size_t tokens = t.dim(1);
  return ops::permute(ops::reshape(t, {batch, tokens, heads, head_dim}), {0, 2, 1, 3});
}

struct HeadTensors {
  Tensor weights;  // [B, M, L, L]
  Tensor values;   // [B, M, L, d]
};

HeadTensors head_tensors(const Tensor& x3, const MhsaParams& params, const AttentionMask& mask,
                         const AttentionConfig& config) {
  Tensor q = split_heads(ops::matmul(x3, params.w_q), config.heads, config.head_dim);
  Tensor k = split_heads(ops::matmul(x3, params.w_k), config.heads, config.head_dim);
  Tensor v = split_heads(ops::matmul(x3, params.w_v), config.heads, config.head_dim);
  Tensor logits = ops::matmul(q, ops::transpose_last(k));
  return {masked_softmax(logits, config.logit_scale(), mask, config.mask_mode), v};
}

Tensor as_batched(const Tensor& x) { return x.rank() == 2 ? ops::reshape(x, {1, x.dim(0), x.dim(1)}) : x; }

}  // namespace

void AttentionConfig::validate() const {
  if (heads == 0 || head_dim == 0) throw ParameterError("attention needs at least one head of positive width");
  if (heads * head_dim != channels) {
    throw ParameterError("heads * head_dim must equal channels (" + std::to_string(heads) + " * " +
                         std::to_string(head_dim) + " != " + std::to_string(channels) + ")");
  }
  if (!(norm_eps > 0.0)) throw ParameterError("norm eps must be positive");
}

double AttentionConfig::logit_scale() const { return scaled ? 1.0 / std::sqrt(static_cast<double>(head_dim)) : 1.0; }

std::size_t mhsa_param_count(const AttentionConfig& c) {
  const std::size_t width = c.heads * c.head_dim;
  std::size_t n = 3 * c.channels * width + width * c.channels + c.channels;
  if (c.residual_norm) n += 2 * c.channels;
  return n;
}

MhsaParams init_mhsa(const AttentionConfig& config, std::mt19937_64& rng) {
  config.validate();
  const std::size_t width = config.heads * config.head_dim;
  MhsaParams p;
  p.w_q = xavier(config.channels, width, rng);
  p.w_k = xavier(config.channels, width, rng);
  p.w_v = xavier(config.channels, width, rng);
  p.w_o = xavier(width, config.channels, rng);
  p.b_o = Tensor::zeros({config.channels}, true);
  if (config.residual_norm) {
    p.norm_gain = Tensor::full({config.channels}, 1.0, true);
    p.norm_bias = Tensor::zeros({config.channels}, true);
  }
  return p;
}

Tensor single_head(const Tensor& x, const Tensor& w_q, const Tensor& w_k, const Tensor& w_v,
                   const AttentionMask& mask, double scale, MaskMode mode) {
  if (x.rank() != 2) throw DimensionError("single_head expects x[L, C], got " + to_string(x.shape()));
  if (x.dim(0) != mask.tokens()) {
    throw ContractError("mask covers " + std::to_string(mask.tokens()) + " tokens but input has " +
                        std::to_string(x.dim(0)));
  }
  Tensor q = ops::matmul(x, w_q);
  Tensor k = ops::matmul(x, w_k);
  Tensor v = ops::matmul(x, w_v);
  return ops::matmul(masked_softmax(ops::matmul(q, ops::transpose_last(k)), scale, mask, mode), v);
}

Tensor mhsa_heads(const Tensor& x, const MhsaParams& params, const AttentionMask& mask,
                  const AttentionConfig& config) {
  check_tokens(x, mask, config.channels);
  const Tensor x3 = as_batched(x);
  auto [weights, values] = head_tensors(x3, params, mask, config);
  Tensor attended = ops::matmul(weights, values);  // [B, M, L, d]
  const std::size_t batch = x3.dim(0);
  const std::size_t tokens = x3.dim(1);
  Tensor merged = ops::reshape(ops::permute(attended, {0, 2, 1, 3}), {batch, tokens, config.heads * config.head_dim});
  return x.rank() == 2 ? ops::reshape(merged, {tokens, config.heads * config.head_dim}) : merged;
}

Tensor mhsa(const Tensor& x, const MhsaParams& params, const AttentionMask& mask, const AttentionConfig& config) {
  Tensor projected = ops::linear(mhsa_heads(x, params, mask, config), params.w_o, params.b_o);
  if (!config.residual_norm) return projected;
  return ops::layernorm(ops::add(x, projected), params.norm_gain, params.norm_bias, config.norm_eps);
}

Tensor attention_weights(const Tensor& x, const MhsaParams& params, const AttentionMask& mask,
                         const AttentionConfig& config, std::size_t head) {
  if (head >= config.heads) throw ContractError("head index " + std::to_string(head) + " out of range");
  check_tokens(x, mask, config.channels);
  NoGradGuard no_grad;
  const Tensor x3 = as_batched(x);
  const Tensor weights = head_tensors(x3, params, mask, config).weights.detach();
  const std::size_t batch = x3.dim(0);
  const std::size_t tokens = x3.dim(1);
  const std::size_t plane = tokens * tokens;
  std::vector<double> out(batch * plane);
  const auto w = weights.data();
  for (std::size_t b = 0; b < batch; ++b) {
    std::copy_n(w.begin() + static_cast<std::ptrdiff_t>((b * config.heads + head) * plane), plane,
                out.begin() + static_cast<std::ptrdiff_t>(b * plane));
  }
  if (x.rank() == 2) return Tensor::from({tokens, tokens}, std::move(out));
  return Tensor::from({batch, tokens, tokens}, std::move(out));
}

}  // namespace stam
