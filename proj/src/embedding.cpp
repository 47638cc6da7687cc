// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include "stam/embedding.hpp"

#include <cmath>

#include "stam/error.hpp"
#include "stam/ops.hpp"

namespace stam {

std::vector<double> sinusoid(std::size_t position, std::size_t channels, double base) {
  if (channels == 0 || channels % 2 != 0) {
    throw ParameterError("sinusoidal embedding needs an even, positive channel count, got " + std::to_string(channels));
  }
  if (!(base > 0.0)) throw ParameterError("embedding base must be positive");
  std::vector<double> out(channels);
  const auto p = static_cast<double>(position);
  for (std::size_t i = 0; i < channels / 2; ++i) {
    const double angle = p / std::pow(base, static_cast<double>(2 * i) / static_cast<double>(channels));
    out[2 * i] = std::sin(angle);
    out[2 * i + 1] = std::cos(angle);
  }
  return out;
}

PositionEmbedding build_embedding(AxisKind kind, std::size_t frames, std::size_t joints, std::size_t channels,
                                  double base) {
  if (frames == 0 || joints == 0) throw ParameterError("embedding grid must be non-empty");
  const std::size_t tokens = frames * joints;
  std::vector<double> table(tokens * channels);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < joints; ++i) {
      const auto row = sinusoid(kind == AxisKind::kSpatial ? i : t, channels, base);
      std::copy(row.begin(), row.end(), table.begin() + static_cast<std::ptrdiff_t>((t * joints + i) * channels));
    }
  }
  return {kind, frames, joints, Tensor::from({tokens, channels}, std::move(table))};
}

AttentionMask::AttentionMask(AxisKind kind, std::size_t frames, std::size_t joints)
    : kind_(kind), tokens_(frames * joints) {
  if (frames == 0 || joints == 0) throw ParameterError("mask grid must be non-empty");
  allow_.assign(tokens_ * tokens_, 0);
  std::vector<double> additive(tokens_ * tokens_);
  std::vector<double> keep(tokens_ * tokens_);
  for (std::size_t a = 0; a < tokens_; ++a) {
    for (std::size_t b = 0; b < tokens_; ++b) {
      const bool same_frame = a / joints == b / joints;
      const bool same_joint = a % joints == b % joints;
      const bool ok = kind == AxisKind::kSpatial ? same_frame : same_joint;
      allow_[a * tokens_ + b] = ok ? 1 : 0;
      additive[a * tokens_ + b] = ok ? 0.0 : ops::kMaskSentinel;
      keep[a * tokens_ + b] = ok ? 1.0 : 0.0;
    }
  }
  additive_ = Tensor::from({tokens_, tokens_}, std::move(additive));
  keep_ = Tensor::from({tokens_, tokens_}, std::move(keep));
}

std::size_t AttentionMask::allowed_count() const {
  std::size_t n = 0;
  for (auto v : allow_) n += v;
  return n;
}

}  // namespace stam
