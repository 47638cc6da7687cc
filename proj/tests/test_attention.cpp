// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "stam/attention.hpp"
#include "stam/embedding.hpp"
#include "stam/error.hpp"
#include "stam/ops.hpp"
#include "support.hpp"

namespace stam {
namespace {

using testing::random_tensor;

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return Tensor::from({n, n}, v);
}

AttentionConfig small_config(std::size_t channels, std::size_t heads) {
  AttentionConfig c;
  c.channels = channels;
  c.heads = heads;
  c.head_dim = channels / heads;
  return c;
}

TEST(SingleHead, UniformAttentionAveragesRows) {
  std::mt19937_64 rng(1);
  const Tensor x = random_tensor({6, 4}, rng);
  const auto mask = build_mask(AxisKind::kSpatial, 1, 6);
  const Tensor zero = Tensor::zeros({4, 4});
  const Tensor y = single_head(x, zero, zero, identity(4), mask, 0.5);
  for (std::size_t c = 0; c < 4; ++c) {
    double mean = 0.0;
    for (std::size_t l = 0; l < 6; ++l) mean += x.at({l, c});
    mean /= 6.0;
    for (std::size_t l = 0; l < 6; ++l) EXPECT_NEAR(y.at({l, c}), mean, 1e-15);
  }
}

TEST(SingleHead, SelfOnlyMaskCopiesValues) {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({5, 3}, rng);
  const Tensor wq = random_tensor({3, 3}, rng), wk = random_tensor({3, 3}, rng), wv = random_tensor({3, 3}, rng);
  const auto mask = build_mask(AxisKind::kTemporal, 1, 5);
  EXPECT_EQ(values(single_head(x, wq, wk, wv, mask, 1.0)), values(ops::matmul(x, wv)));
}

TEST(SingleHead, HandEvaluatedTwoTokens) {
  const Tensor x = Tensor::from({2, 1}, {1, 2});
  const Tensor w = Tensor::from({1, 1}, {1});
  const auto mask = build_mask(AxisKind::kSpatial, 1, 2);
  const Tensor y = single_head(x, w, w, w, mask, 1.0);
  const double a0 = 1.0 / (1.0 + std::exp(1.0));
  EXPECT_NEAR(a0, 0.2689, 5e-5);
  EXPECT_NEAR(y.at({0, 0}), a0 * 1.0 + (1.0 - a0) * 2.0, 1e-15);
  EXPECT_NEAR(y.at({0, 0}), 1.7311, 5e-5);
}

TEST(SingleHead, MaskSizeMismatchIsContractError) {
  const Tensor x = Tensor::zeros({4, 2});
  const Tensor w = Tensor::zeros({2, 2});
  EXPECT_THROW(single_head(x, w, w, w, build_mask(AxisKind::kSpatial, 1, 3), 1.0), ContractError);
}

TEST(Mhsa, ParameterCount) {
  AttentionConfig cfg;
  cfg.residual_norm = false;
  EXPECT_EQ(mhsa_param_count(cfg), 65664u);
  EXPECT_EQ(3u * 8 * 128 * 16 + 128 * 128 + 128, 65664u);
  cfg.residual_norm = true;
  EXPECT_EQ(mhsa_param_count(cfg), 65664u + 256u);
  std::mt19937_64 rng(3);
  const auto p = init_mhsa(cfg, rng);
  const std::size_t counted = p.w_q.numel() + p.w_k.numel() + p.w_v.numel() + p.w_o.numel() + p.b_o.numel() +
                              p.norm_gain.numel() + p.norm_bias.numel();
  EXPECT_EQ(counted, mhsa_param_count(cfg));
  cfg.heads = 3;
  EXPECT_THROW(init_mhsa(cfg, rng), ParameterError);
}

TEST(Mhsa, ZeroInputGivesZeroAndDefaultShape) {
  std::mt19937_64 rng(4);
  AttentionConfig cfg;
  const auto p = init_mhsa(cfg, rng);
  const auto mask = build_mask(AxisKind::kSpatial, 4, 21);
  const Tensor y = mhsa(Tensor::zeros({84, 128}), p, mask, cfg);
  EXPECT_EQ(y.shape(), (Shape{84, 128}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(mhsa(random_tensor({8, 84, 128}, rng), p, mask, cfg).shape(), (Shape{8, 84, 128}));
}

TEST(Mhsa, MaskedWeightsAreExactlyZeroAndRowsNormalised) {
  std::mt19937_64 rng(5);
  for (std::size_t frames : {1u, 3u, 8u}) {
    for (std::size_t joints : {1u, 5u, 8u}) {
      const auto cfg = small_config(8, 2);
      const auto p = init_mhsa(cfg, rng);
      const Tensor x = random_tensor({frames * joints, 8}, rng, -3, 3);
      for (AxisKind kind : {AxisKind::kSpatial, AxisKind::kTemporal}) {
        const auto mask = build_mask(kind, frames, joints);
        for (std::size_t head = 0; head < 2; ++head) {
          const Tensor a = attention_weights(x, p, mask, cfg, head);
          const std::size_t l = frames * joints;
          for (std::size_t q = 0; q < l; ++q) {
            double s = 0.0;
            for (std::size_t k = 0; k < l; ++k) {
              if (!mask.allowed(q, k)) {
                EXPECT_EQ(a.at({q, k}), 0.0);
              }
              s += a.at({q, k});
            }
            EXPECT_NEAR(s, 1.0, 1e-12);
          }
        }
      }
    }
  }
}

TEST(Mhsa, TemporalSingleFrameIsIdentity) {
  std::mt19937_64 rng(6);
  const auto cfg = small_config(8, 2);
  const auto p = init_mhsa(cfg, rng);
  const auto mask = build_mask(AxisKind::kTemporal, 1, 5);
  const Tensor a = attention_weights(random_tensor({5, 8}, rng), p, mask, cfg, 1);
  EXPECT_EQ(values(a), values(identity(5)));
}

TEST(Mhsa, MultiplicativeModeZeroesBlockedWeights) {
  std::mt19937_64 rng(7);
  auto cfg = small_config(8, 2);
  cfg.mask_mode = MaskMode::kMultiplicative;
  const auto p = init_mhsa(cfg, rng);
  const auto mask = build_mask(AxisKind::kSpatial, 3, 2);
  const Tensor a = attention_weights(random_tensor({6, 8}, rng), p, mask, cfg, 0);
  for (std::size_t q = 0; q < 6; ++q) {
    double s = 0.0;
    for (std::size_t k = 0; k < 6; ++k) {
      if (!mask.allowed(q, k)) {
        EXPECT_EQ(a.at({q, k}), 0.0);
      }
      s += a.at({q, k});
    }
    EXPECT_LT(s, 1.0);
  }
}

TEST(Mhsa, WeightsIgnoreConstantShiftWhenQueryWeightsVanish) {
  std::mt19937_64 rng(8);
  const auto cfg = small_config(8, 2);
  auto p = init_mhsa(cfg, rng);
  p.w_q = Tensor::zeros({8, 8});
  const auto mask = build_mask(AxisKind::kSpatial, 2, 3);
  const Tensor x = random_tensor({6, 8}, rng);
  const Tensor shift = random_tensor({8}, rng, -5, 5);
  const Tensor a = attention_weights(x, p, mask, cfg, 0);
  const Tensor b = attention_weights(ops::add(x, shift), p, mask, cfg, 0);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-15);
}

TEST(Mhsa, HeadsAreIndependent) {
  std::mt19937_64 rng(9);
  const auto cfg = small_config(8, 2);
  auto p = init_mhsa(cfg, rng);
  const auto mask = build_mask(AxisKind::kSpatial, 2, 3);
  const Tensor x = random_tensor({6, 8}, rng);
  const Tensor before = mhsa_heads(x, p, mask, cfg);
  for (Tensor* w : {&p.w_q, &p.w_k, &p.w_v}) {
    auto d = w->mutable_data();
    for (std::size_t r = 0; r < 8; ++r) {
      for (std::size_t c = 4; c < 8; ++c) d[r * 8 + c] = 0.0;
    }
  }
  const Tensor after = mhsa_heads(x, p, mask, cfg);
  for (std::size_t l = 0; l < 6; ++l) {
    for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(after.at({l, c}), before.at({l, c}));
    for (std::size_t c = 4; c < 8; ++c) EXPECT_EQ(after.at({l, c}), 0.0);
  }
}

TEST(Mhsa, PermutingJointsWithinFramesPermutesOutputs) {
  std::mt19937_64 rng(10);
  const auto cfg = small_config(8, 2);
  const auto p = init_mhsa(cfg, rng);
  const auto mask = build_mask(AxisKind::kSpatial, 2, 3);
  const Tensor x = random_tensor({6, 8}, rng);
  // Swap joints 0 and 2 in both frames.
  const std::size_t perm[] = {2, 1, 0, 5, 4, 3};
  std::vector<double> px(48);
  for (std::size_t l = 0; l < 6; ++l) {
    for (std::size_t c = 0; c < 8; ++c) px[l * 8 + c] = x.at({perm[l], c});
  }
  const Tensor y = mhsa(x, p, mask, cfg);
  const Tensor py = mhsa(Tensor::from({6, 8}, px), p, mask, cfg);
  for (std::size_t l = 0; l < 6; ++l) {
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(py.at({l, c}), y.at({perm[l], c}), 1e-13);
  }
}

TEST(Mhsa, BatchedMatchesPerItem) {
  std::mt19937_64 rng(11);
  const auto cfg = small_config(8, 2);
  const auto p = init_mhsa(cfg, rng);
  const auto mask = build_mask(AxisKind::kTemporal, 3, 2);
  const Tensor xb = random_tensor({2, 6, 8}, rng);
  const Tensor yb = mhsa(xb, p, mask, cfg);
  for (std::size_t b = 0; b < 2; ++b) {
    std::vector<double> item(xb.data().begin() + static_cast<std::ptrdiff_t>(b * 48),
                             xb.data().begin() + static_cast<std::ptrdiff_t>((b + 1) * 48));
    const Tensor y = mhsa(Tensor::from({6, 8}, item), p, mask, cfg);
    for (std::size_t i = 0; i < 48; ++i) EXPECT_NEAR(yb.data()[b * 48 + i], y.data()[i], 1e-14);
  }
}

TEST(Mhsa, Gradcheck) {
  std::mt19937_64 rng(12);
  for (MaskMode mode : {MaskMode::kAdditive, MaskMode::kMultiplicative}) {
    auto cfg = small_config(8, 2);
    cfg.mask_mode = mode;
    auto p = init_mhsa(cfg, rng);
    p.b_o = random_tensor({8}, rng, -0.5, 0.5, true);
    p.norm_gain = random_tensor({8}, rng, 0.5, 1.5, true);
    p.norm_bias = random_tensor({8}, rng, -0.5, 0.5, true);
    Tensor x = random_tensor({6, 8}, rng, -1, 1, true);
    const auto mask = build_mask(AxisKind::kSpatial, 2, 3);
    const auto r = testing::gradcheck([&] { return mhsa(x, p, mask, cfg); },
                                      {x, p.w_q, p.w_k, p.w_v, p.w_o, p.b_o, p.norm_gain, p.norm_bias});
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  }
}

}  // namespace
}  // namespace stam
