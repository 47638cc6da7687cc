// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "stam/error.hpp"
#include "stam/model.hpp"
#include "stam/ops.hpp"
#include "support.hpp"

namespace stam {
namespace {

using testing::random_tensor;

ModelConfig tiny_config() {
  ModelConfig c;
  c.frames = 2;
  c.joints = 4;
  c.septcn.mid_channels = 4;
  c.septcn.out_channels = 8;
  c.heads = 2;
  c.n_classes = 3;
  c.classifier_width = 6;
  return c;
}

TEST(Model, ShapeContractAtDefaults) {
  ModelConfig c;
  c.n_classes = 10;
  const StamModel model(c);
  std::mt19937_64 rng(1);
  const auto t = model.trace(random_tensor({8, 3, 4, 21}, rng), false);
  EXPECT_EQ(t.features.shape(), (Shape{8, 128, 4, 21}));
  EXPECT_EQ(t.tokens.shape(), (Shape{8, 84, 128}));
  ASSERT_EQ(t.streams.size(), 4u);
  for (const auto& s : t.streams) EXPECT_EQ(s.shape(), (Shape{8, 84, 128}));
  EXPECT_EQ(t.fused.shape(), (Shape{8, 336, 128}));
  EXPECT_EQ(t.head.shape(), (Shape{8, 336, 128}));
  EXPECT_EQ(t.pooled.shape(), (Shape{8, 128}));
  EXPECT_EQ(t.logits.shape(), (Shape{8, 10}));
  EXPECT_THROW(model.forward(random_tensor({8, 3, 5, 21}, rng), false), ContractError);
  EXPECT_THROW(model.forward(random_tensor({3, 4, 21}, rng), false), ContractError);
}

TEST(Model, StreamTogglesChangeFusedLength) {
  std::mt19937_64 rng(2);
  const Tensor x = random_tensor({2, 3, 2, 4}, rng);
  for (std::size_t only = 0; only < kStreamCount; ++only) {
    auto c = tiny_config();
    c.streams = {false, false, false, false};
    c.streams[only] = true;
    const StamModel model(c);
    const auto t = model.trace(x, false);
    EXPECT_EQ(t.fused.shape(), (Shape{2, 8, 8}));
    EXPECT_EQ(t.logits.shape(), (Shape{2, 3}));
  }
  auto c = tiny_config();
  c.streams = {true, false, true, true};
  EXPECT_EQ(StamModel(c).trace(x, false).fused.shape(), (Shape{2, 24, 8}));
  c.streams = {false, false, false, false};
  EXPECT_THROW(StamModel{c}, ParameterError);
}

TEST(Model, ConfigJsonIsStrict) {
  auto c = tiny_config();
  c.mask_mode = MaskMode::kMultiplicative;
  c.streams = {true, false, true, false};
  const auto back = model_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  auto doc = to_json(c);
  doc["bogus"] = 1;
  EXPECT_THROW(model_config_from_json(doc), ParameterError);
  doc = to_json(c);
  doc["heads"] = "two";
  EXPECT_THROW(model_config_from_json(doc), ParameterError);
  doc = to_json(c);
  doc["mask_mode"] = "sideways";
  EXPECT_THROW(model_config_from_json(doc), ParameterError);
  doc = to_json(c);
  doc["heads"] = 3;
  EXPECT_THROW(model_config_from_json(doc), ParameterError);
  EXPECT_EQ(model_config_from_json(nlohmann::json::object()).n_classes, ModelConfig{}.n_classes);
}

TEST(Model, ClassifierHeadHandExample) {
  auto c = tiny_config();
  c.classifier_width = 2;
  c.norm_eps = 1e-12;
  StamModel model(c);
  for (double& v : model.parameter("classifier.fc.weight").mutable_data()) v = 0.0;
  auto bias = model.parameter("classifier.fc.bias").mutable_data();
  bias[0] = -1.0;
  bias[1] = 1.0;
  std::mt19937_64 rng(3);
  const Tensor h = model.classifier_head(random_tensor({3, 8}, rng), false, nullptr);
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_NEAR(h.at({r, 0}), -0.1, 1e-9);
    EXPECT_NEAR(h.at({r, 1}), 1.0, 1e-9);
  }
  EXPECT_THROW(model.classifier_head(Tensor::zeros({3, 8}), true, nullptr), ContractError);
}

TEST(Model, LossValues) {
  const std::vector<std::size_t> labels{0, 3};
  EXPECT_NEAR(classification_loss(Tensor::zeros({2, 4}), labels).item(), std::log(4.0), 1e-15);
  const std::vector<std::size_t> one{1};
  EXPECT_NEAR(classification_loss(Tensor::from({1, 2}, {0, 0}), one).item(), std::log(2.0), 1e-15);
  EXPECT_NEAR(classification_loss(Tensor::from({1, 2}, {-800, 800}), one).item(), 0.0, 1e-15);
}

TEST(Model, FullGradcheck) {
  auto c = tiny_config();
  c.dropout = 0.0;
  StamModel model(c);
  std::mt19937_64 rng(4);
  // Move every bias and gain off its initial value so all paths are exercised.
  for (Tensor p : model.parameter_tensors()) {
    if (p.rank() != 1) continue;
    for (double& v : p.mutable_data()) v += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
  }
  Tensor x = random_tensor({2, 3, 2, 4}, rng, -1, 1, true);
  auto inputs = model.parameter_tensors();
  inputs.push_back(x);
  const auto r = testing::gradcheck([&] { return model.forward(x, false); }, inputs);
  EXPECT_GT(r.checked, 300u);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Model, ResidualOnlyModelIgnoresJointOrder) {
  auto c = tiny_config();
  c.streams = {false, false, false, true};
  const StamModel model(c);
  std::mt19937_64 rng(5);
  const Tensor x = random_tensor({2, 3, 2, 4}, rng);
  const std::size_t perm[] = {3, 0, 2, 1};
  std::vector<double> px(x.numel());
  for (std::size_t i = 0; i < x.numel() / 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) px[i * 4 + j] = x.data()[i * 4 + perm[j]];
  }
  const Tensor a = model.forward(x, false);
  const Tensor b = model.forward(Tensor::from(x.shape(), px), false);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a.data()[i], b.data()[i], 1e-9);
}

TEST(Model, DropoutOnlyActsInTraining) {
  auto c = tiny_config();
  c.dropout = 0.5;
  const StamModel model(c);
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({2, 3, 2, 4}, rng);
  const Tensor e1 = model.forward(x, false);
  const Tensor e2 = model.forward(x, false);
  EXPECT_EQ(std::vector<double>(e1.data().begin(), e1.data().end()),
            std::vector<double>(e2.data().begin(), e2.data().end()));
  std::mt19937_64 drop(7);
  const Tensor t = model.forward(x, true, &drop);
  bool differs = false;
  for (std::size_t i = 0; i < t.numel(); ++i) differs = differs || t.data()[i] != e1.data()[i];
  EXPECT_TRUE(differs);
}

TEST(Model, ParameterGroupsAndSnapshots) {
  ModelConfig c;
  c.n_classes = 10;
  StamModel model(c);
  const auto groups = model.trainable_by_module();
  ASSERT_EQ(groups.size(), 5u);
  EXPECT_EQ(groups[0], (std::pair<std::string, std::size_t>{"septcn", 17548}));
  EXPECT_EQ(groups[1].first, "stream1");
  EXPECT_EQ(groups[4].first, "classifier");
  std::size_t sum = 0;
  for (const auto& g : groups) sum += g.second;
  EXPECT_EQ(sum, model.count_trainable());
  EXPECT_EQ(model.count_trainable(), 299286u);

  const auto snap = model.snapshot();
  model.parameter("classifier.out.bias").mutable_data()[0] = 42.0;
  model.restore(snap);
  EXPECT_EQ(model.parameter("classifier.out.bias").data()[0], snap.back()[0]);
  EXPECT_THROW(model.parameter("nope"), ContractError);
  auto bad = snap;
  bad.pop_back();
  EXPECT_THROW(model.restore(bad), ContractError);
}

TEST(Model, SameSeedSameWeights) {
  const StamModel a(tiny_config());
  const StamModel b(tiny_config());
  EXPECT_EQ(a.snapshot(), b.snapshot());
  auto c = tiny_config();
  c.seed = 8;
  EXPECT_NE(StamModel(c).snapshot(), a.snapshot());
}

}  // namespace
}  // namespace stam
