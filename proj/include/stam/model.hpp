// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "stam/attention.hpp"
#include "stam/embedding.hpp"
#include "stam/septcn.hpp"
#include "stam/tensor.hpp"

namespace stam {

// Stream order is fixed: spatial, temporal, spatial->temporal, residual.
enum StreamIndex : std::size_t { kSpatialStream = 0, kTemporalStream = 1, kSpatioTemporalStream = 2, kResidualStream = 3 };
inline constexpr std::size_t kStreamCount = 4;

struct ModelConfig {
  std::size_t frames = 4;
  std::size_t joints = 21;
  SepTcnConfig septcn;  // septcn.in_channels is the coordinate count K
  std::size_t heads = 8;
  std::size_t n_classes = 38;
  std::size_t classifier_width = 128;
  double dropout = 0.01;
  double leaky_slope = 0.1;
  double norm_eps = 1e-5;
  double embedding_base = kDefaultEmbeddingBase;
  MaskMode mask_mode = MaskMode::kAdditive;
  bool scaled_attention = true;
  bool attention_residual_norm = true;
  bool normalize_input = true;
  std::array<bool, kStreamCount> streams{true, true, true, true};
  std::uint64_t seed = 7;

  std::size_t channels() const { return septcn.out_channels; }
  std::size_t head_dim() const { return channels() / heads; }
  std::size_t feature_frames() const { return septcn.output_frames(frames); }
  std::size_t tokens() const { return feature_frames() * joints; }
  std::size_t enabled_streams() const;
  AttentionConfig attention() const;

  // Throws ParameterError on inconsistent settings.
  void validate() const;
};

// Unknown keys are rejected. Missing keys keep their defaults.
nlohmann::json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& doc);

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Intermediate activations of one forward pass, kept for inspection.
struct ForwardTrace {
  Tensor features;  // [B, C, T', N]
  Tensor tokens;    // [B, L, C]
  std::vector<Tensor> streams;  // enabled streams, each [B, L, C]
  Tensor fused;     // [B, S*L, C]
  Tensor head;      // [B, S*L, W]
  Tensor pooled;    // [B, W]
  Tensor logits;    // [B, classes]
};

class StamModel {
 public:
  explicit StamModel(ModelConfig config);
  // Parameters are shared handles; copying would alias them.
  StamModel(const StamModel&) = delete;
  StamModel& operator=(const StamModel&) = delete;
  StamModel(StamModel&&) = default;
  StamModel& operator=(StamModel&&) = default;

  const ModelConfig& config() const { return config_; }

  // Trainable arrays in a fixed order; names are dotted paths such as
  // "stream1.spatial.attn.w_q".
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::vector<Tensor> parameter_tensors() const;
  Tensor& parameter(const std::string& name);

  // batch[B, K, T, N] -> logits[B, classes]. `rng` drives dropout and is
  // required only when training.
  Tensor forward(const Tensor& batch, bool training, std::mt19937_64* rng = nullptr) const;
  ForwardTrace trace(const Tensor& batch, bool training, std::mt19937_64* rng = nullptr) const;

  // Token-wise: linear -> ReLU -> LayerNorm -> leaky ReLU -> dropout.
  Tensor classifier_head(const Tensor& fused, bool training, std::mt19937_64* rng) const;

  std::size_t count_trainable() const;
  // (group, count) with groups such as "septcn", "stream1", "classifier".
  std::vector<std::pair<std::string, std::size_t>> trainable_by_module() const;

  // Deep copy of the current parameter values, and the reverse.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& values);

  const PositionEmbedding& spatial_embedding() const { return spatial_pe_; }
  const PositionEmbedding& temporal_embedding() const { return temporal_pe_; }
  const AttentionMask& spatial_mask() const { return spatial_mask_; }
  const AttentionMask& temporal_mask() const { return temporal_mask_; }

 private:
  struct Attn {
    MhsaParams params;
    bool present = false;
  };

  void register_mhsa(const std::string& prefix, const MhsaParams& p);
  void register_tensor(std::string name, const Tensor& t);

  ModelConfig config_;
  SepTcnParams septcn_;
  Attn spatial1_;
  Attn temporal2_;
  Attn spatial3_;
  Attn temporal3_;
  Tensor head_weight_;
  Tensor head_bias_;
  Tensor head_norm_gain_;
  Tensor head_norm_bias_;
  Tensor out_weight_;
  Tensor out_bias_;
  PositionEmbedding spatial_pe_;
  PositionEmbedding temporal_pe_;
  AttentionMask spatial_mask_;
  AttentionMask temporal_mask_;
  std::vector<NamedTensor> params_;
};

// Mean categorical cross-entropy; labels must be < classes.
Tensor classification_loss(const Tensor& logits, std::span<const std::size_t> labels);

// Binary checkpoint: magic, version, JSON header (config + array directory),
// then every array as little-endian doubles in directory order.
inline constexpr std::uint32_t kCheckpointVersion = 1;
void save_checkpoint(const std::filesystem::path& path, const StamModel& model);
StamModel load_checkpoint(const std::filesystem::path& path);

}  // namespace stam
