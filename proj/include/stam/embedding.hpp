// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "stam/tensor.hpp"

namespace stam {

// Tokens are the flattened (frame, joint) grid: token(t, i) = t * joints + i.
enum class AxisKind { kSpatial, kTemporal };

inline constexpr double kDefaultEmbeddingBase = 1000.0;

// Entry 2i holds sin(p / base^(2i / channels)), entry 2i + 1 the matching
// cosine. `channels` must be even.
std::vector<double> sinusoid(std::size_t position, std::size_t channels, double base = kDefaultEmbeddingBase);

// Spatial tables index rows by joint, temporal tables by frame.
struct PositionEmbedding {
  AxisKind kind = AxisKind::kSpatial;
  std::size_t frames = 0;
  std::size_t joints = 0;
  Tensor table;  // [frames * joints, channels], constant
};

PositionEmbedding build_embedding(AxisKind kind, std::size_t frames, std::size_t joints, std::size_t channels,
                                  double base = kDefaultEmbeddingBase);

// Spatial masks allow pairs within one frame, temporal masks pairs that share
// a joint. Both are symmetric with a true diagonal.
class AttentionMask {
 public:
  AttentionMask(AxisKind kind, std::size_t frames, std::size_t joints);

  AxisKind kind() const { return kind_; }
  std::size_t tokens() const { return tokens_; }
  bool allowed(std::size_t query, std::size_t key) const { return allow_[query * tokens_ + key] != 0; }
  std::size_t allowed_count() const;

  // [L, L] with 0 where allowed and ops::kMaskSentinel where blocked.
  const Tensor& additive_bias() const { return additive_; }
  // [L, L] with 1 where allowed and 0 where blocked.
  const Tensor& keep() const { return keep_; }

 private:
  AxisKind kind_;
  std::size_t tokens_;
  std::vector<std::uint8_t> allow_;
  Tensor additive_;
  Tensor keep_;
};

inline AttentionMask build_mask(AxisKind kind, std::size_t frames, std::size_t joints) {
  return AttentionMask(kind, frames, joints);
}

}  // namespace stam
