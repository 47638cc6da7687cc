// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include "stam/septcn.hpp"

#include <cmath>

#include "stam/error.hpp"
#include "stam/ops.hpp"

namespace stam {
namespace {

Tensor uniform_tensor(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), true);
}

}  // namespace

void SepTcnConfig::validate() const {
  if (in_channels == 0 || mid_channels == 0 || out_channels == 0) throw ParameterError("Sep-TCN channels must be positive");
  if (kernel1 % 2 == 0 || kernel2 % 2 == 0 || pool_kernel % 2 == 0) {
    throw ParameterError("Sep-TCN kernels must be odd for same padding");
  }
  if (stride1 == 0 || stride2 == 0) throw ParameterError("Sep-TCN strides must be positive");
}

std::size_t SepTcnConfig::output_frames(std::size_t frames) const {
  const auto after1 = ops::temporal_output_length(frames, {kernel1, stride1, (kernel1 - 1) / 2});
  return ops::temporal_output_length(after1, {kernel2, stride2, (kernel2 - 1) / 2});
}

std::size_t septcn_block_param_count(std::size_t in_channels, std::size_t out_channels, std::size_t kernel) {
  std::size_t count = in_channels * kernel + in_channels + in_channels * out_channels + out_channels;
  if (in_channels != out_channels) count += in_channels * out_channels + out_channels;
  return count;
}

SepTcnBlockParams init_septcn_block(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                                    std::mt19937_64& rng) {
  SepTcnBlockParams p;
  p.dw_weight = uniform_tensor({in_channels, 1, kernel}, 1.0 / std::sqrt(static_cast<double>(kernel)), rng);
  p.dw_bias = Tensor::zeros({in_channels}, true);
  const double pw_bound = 1.0 / std::sqrt(static_cast<double>(in_channels));
  p.pw_weight = uniform_tensor({out_channels, in_channels, 1}, pw_bound, rng);
  p.pw_bias = Tensor::zeros({out_channels}, true);
  if (in_channels != out_channels) {
    p.proj_weight = uniform_tensor({out_channels, in_channels, 1}, pw_bound, rng);
    p.proj_bias = Tensor::zeros({out_channels}, true);
  }
  return p;
}

SepTcnParams init_septcn(const SepTcnConfig& config, std::mt19937_64& rng) {
  config.validate();
  SepTcnParams p;
  p.block1 = init_septcn_block(config.in_channels, config.mid_channels, config.kernel1, rng);
  p.block2 = init_septcn_block(config.mid_channels, config.out_channels, config.kernel2, rng);
  return p;
}

Tensor septcn_block(const Tensor& x, const SepTcnBlockParams& params, std::size_t stride, std::size_t pool_kernel) {
  const std::size_t channels = x.dim(-3);
  const std::size_t kernel = params.dw_weight.dim(2);
  Tensor depthwise = ops::conv_temporal(x, params.dw_weight, params.dw_bias, stride, (kernel - 1) / 2, channels);
  Tensor pointwise = ops::conv_temporal(depthwise, params.pw_weight, params.pw_bias, 1, 0, 1);
  Tensor shortcut = ops::subsample_temporal(x, stride);
  if (params.has_projection()) shortcut = ops::conv_temporal(shortcut, params.proj_weight, params.proj_bias, 1, 0, 1);
  Tensor merged = ops::relu(ops::add(pointwise, shortcut));
  return ops::maxpool_temporal(merged, {pool_kernel, 1, (pool_kernel - 1) / 2});
}

Tensor septcn_forward(const Tensor& x, const SepTcnConfig& config, const SepTcnParams& params) {
  if (x.dim(-3) != config.in_channels) {
    throw DimensionError("Sep-TCN expects " + std::to_string(config.in_channels) + " input channels, got " +
                         to_string(x.shape()));
  }
  Tensor h = septcn_block(x, params.block1, config.stride1, config.pool_kernel);
  return septcn_block(h, params.block2, config.stride2, config.pool_kernel);
}

Tensor tokens_from_features(const Tensor& features) {
  if (features.rank() == 3) {
    const std::size_t c = features.dim(0);
    return ops::reshape(ops::permute(features, {1, 2, 0}), {features.dim(1) * features.dim(2), c});
  }
  if (features.rank() == 4) {
    const std::size_t c = features.dim(1);
    return ops::reshape(ops::permute(features, {0, 2, 3, 1}), {features.dim(0), features.dim(2) * features.dim(3), c});
  }
  throw DimensionError("tokens_from_features expects [C,T,N] or [B,C,T,N], got " + to_string(features.shape()));
}

Tensor features_from_tokens(const Tensor& tokens, std::size_t frames, std::size_t joints) {
  if (tokens.rank() == 2 && tokens.dim(0) == frames * joints) {
    return ops::permute(ops::reshape(tokens, {frames, joints, tokens.dim(1)}), {2, 0, 1});
  }
  if (tokens.rank() == 3 && tokens.dim(1) == frames * joints) {
    return ops::permute(ops::reshape(tokens, {tokens.dim(0), frames, joints, tokens.dim(2)}), {0, 3, 1, 2});
  }
  throw DimensionError("features_from_tokens: " + to_string(tokens.shape()) + " is not " +
                       std::to_string(frames * joints) + " tokens");
}

}  // namespace stam
