// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include "stam/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "stam/error.hpp"
#include "stam/ops.hpp"

namespace stam {
namespace {

using nlohmann::json;

const ModelConfig& validated(const ModelConfig& config) {
  config.validate();
  return config;
}

std::string mask_mode_name(MaskMode mode) { return mode == MaskMode::kAdditive ? "additive" : "multiplicative"; }

MaskMode mask_mode_from(const std::string& name) {
  if (name == "additive") return MaskMode::kAdditive;
  if (name == "multiplicative") return MaskMode::kMultiplicative;
  throw ParameterError("unknown mask_mode '" + name + "' (expected additive or multiplicative)");
}

void reject_unknown(const json& doc, const std::set<std::string>& allowed, const std::string& where) {
  if (!doc.is_object()) throw ParameterError(where + " must be a JSON object");
  for (const auto& item : doc.items()) {
    if (!allowed.count(item.key())) throw ParameterError("unknown key '" + item.key() + "' in " + where);
  }
}

template <typename T>
void read_field(const json& doc, const char* key, T& field, const std::string& where) {
  if (!doc.contains(key)) return;
  try {
    field = doc.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParameterError(where + "." + key + " has the wrong type");
  }
}

Tensor uniform_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> values(rows * cols);
  for (auto& v : values) v = dist(rng);
  return Tensor::from({rows, cols}, std::move(values), true);
}

}  // namespace

std::size_t ModelConfig::enabled_streams() const {
  return static_cast<std::size_t>(std::count(streams.begin(), streams.end(), true));
}

AttentionConfig ModelConfig::attention() const {
  return {.channels = channels(),
          .heads = heads,
          .head_dim = heads ? channels() / heads : 0,
          .scaled = scaled_attention,
          .residual_norm = attention_residual_norm,
          .mask_mode = mask_mode,
          .norm_eps = norm_eps};
}

void ModelConfig::validate() const {
  if (frames == 0 || joints == 0) throw ParameterError("frames and joints must be positive");
  septcn.validate();
  if (heads == 0 || channels() % heads != 0) {
    throw ParameterError("channels (" + std::to_string(channels()) + ") must split evenly over " +
                         std::to_string(heads) + " heads");
  }
  if (channels() % 2 != 0) throw ParameterError("position embeddings need an even channel count");
  if (n_classes < 2) throw ParameterError("n_classes must be at least 2");
  if (classifier_width == 0) throw ParameterError("classifier_width must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("dropout must lie in [0, 1)");
  if (!(norm_eps > 0.0)) throw ParameterError("norm_eps must be positive");
  if (!(embedding_base > 0.0)) throw ParameterError("embedding_base must be positive");
  if (enabled_streams() == 0) throw ParameterError("at least one stream must be enabled");
  (void)feature_frames();  // throws on impossible geometry
}

json to_json(const ModelConfig& c) {
  return json{{"frames", c.frames},
              {"joints", c.joints},
              {"coords", c.septcn.in_channels},
              {"mid_channels", c.septcn.mid_channels},
              {"channels", c.septcn.out_channels},
              {"kernel1", c.septcn.kernel1},
              {"stride1", c.septcn.stride1},
              {"kernel2", c.septcn.kernel2},
              {"stride2", c.septcn.stride2},
              {"pool_kernel", c.septcn.pool_kernel},
              {"heads", c.heads},
              {"n_classes", c.n_classes},
              {"classifier_width", c.classifier_width},
              {"dropout", c.dropout},
              {"leaky_slope", c.leaky_slope},
              {"norm_eps", c.norm_eps},
              {"embedding_base", c.embedding_base},
              {"mask_mode", mask_mode_name(c.mask_mode)},
              {"scaled_attention", c.scaled_attention},
              {"attention_residual_norm", c.attention_residual_norm},
              {"normalize_input", c.normalize_input},
              {"streams", c.streams},
              {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& doc) {
  static const std::set<std::string> kKeys{
      "frames",       "joints",    "coords",          "mid_channels", "channels",         "kernel1",
      "stride1",      "kernel2",   "stride2",         "pool_kernel",  "heads",            "n_classes",
      "classifier_width", "dropout", "leaky_slope",   "norm_eps",     "embedding_base",   "mask_mode",
      "scaled_attention", "attention_residual_norm",  "normalize_input", "streams",       "seed"};
  const std::string where = "model";
  reject_unknown(doc, kKeys, where);
  ModelConfig c;
  read_field(doc, "frames", c.frames, where);
  read_field(doc, "joints", c.joints, where);
  read_field(doc, "coords", c.septcn.in_channels, where);
  read_field(doc, "mid_channels", c.septcn.mid_channels, where);
  read_field(doc, "channels", c.septcn.out_channels, where);
  read_field(doc, "kernel1", c.septcn.kernel1, where);
  read_field(doc, "stride1", c.septcn.stride1, where);
  read_field(doc, "kernel2", c.septcn.kernel2, where);
  read_field(doc, "stride2", c.septcn.stride2, where);
  read_field(doc, "pool_kernel", c.septcn.pool_kernel, where);
  read_field(doc, "heads", c.heads, where);
  read_field(doc, "n_classes", c.n_classes, where);
  read_field(doc, "classifier_width", c.classifier_width, where);
  read_field(doc, "dropout", c.dropout, where);
  read_field(doc, "leaky_slope", c.leaky_slope, where);
  read_field(doc, "norm_eps", c.norm_eps, where);
  read_field(doc, "embedding_base", c.embedding_base, where);
  std::string mode = mask_mode_name(c.mask_mode);
  read_field(doc, "mask_mode", mode, where);
  c.mask_mode = mask_mode_from(mode);
  read_field(doc, "scaled_attention", c.scaled_attention, where);
  read_field(doc, "attention_residual_norm", c.attention_residual_norm, where);
  read_field(doc, "normalize_input", c.normalize_input, where);
  read_field(doc, "streams", c.streams, where);
  read_field(doc, "seed", c.seed, where);
  c.validate();
  return c;
}

StamModel::StamModel(ModelConfig config)
    : config_(validated(config)),
      spatial_pe_(build_embedding(AxisKind::kSpatial, config.feature_frames(), config.joints, config.channels(),
                                  config.embedding_base)),
      temporal_pe_(build_embedding(AxisKind::kTemporal, config.feature_frames(), config.joints, config.channels(),
                                   config.embedding_base)),
      spatial_mask_(AxisKind::kSpatial, config.feature_frames(), config.joints),
      temporal_mask_(AxisKind::kTemporal, config.feature_frames(), config.joints) {
  std::mt19937_64 rng(config_.seed);
  const auto attn = config_.attention();
  const std::size_t c = config_.channels();
  const std::size_t w = config_.classifier_width;

  septcn_ = init_septcn(config_.septcn, rng);
  auto register_block = [&](const std::string& prefix, const SepTcnBlockParams& b) {
    register_tensor(prefix + ".dw.weight", b.dw_weight);
    register_tensor(prefix + ".dw.bias", b.dw_bias);
    register_tensor(prefix + ".pw.weight", b.pw_weight);
    register_tensor(prefix + ".pw.bias", b.pw_bias);
    if (b.has_projection()) {
      register_tensor(prefix + ".proj.weight", b.proj_weight);
      register_tensor(prefix + ".proj.bias", b.proj_bias);
    }
  };
  register_block("septcn.block1", septcn_.block1);
  register_block("septcn.block2", septcn_.block2);

  auto make_attn = [&](Attn& slot, bool enabled, const std::string& prefix) {
    if (!enabled) return;
    slot.params = init_mhsa(attn, rng);
    slot.present = true;
    register_mhsa(prefix, slot.params);
  };
  make_attn(spatial1_, config_.streams[kSpatialStream], "stream1.spatial");
  make_attn(temporal2_, config_.streams[kTemporalStream], "stream2.temporal");
  make_attn(spatial3_, config_.streams[kSpatioTemporalStream], "stream3.spatial");
  make_attn(temporal3_, config_.streams[kSpatioTemporalStream], "stream3.temporal");

  head_weight_ = uniform_matrix(c, w, rng);
  head_bias_ = Tensor::zeros({w}, true);
  head_norm_gain_ = Tensor::full({w}, 1.0, true);
  head_norm_bias_ = Tensor::zeros({w}, true);
  out_weight_ = uniform_matrix(w, config_.n_classes, rng);
  out_bias_ = Tensor::zeros({config_.n_classes}, true);
  register_tensor("classifier.fc.weight", head_weight_);
  register_tensor("classifier.fc.bias", head_bias_);
  register_tensor("classifier.norm.gain", head_norm_gain_);
  register_tensor("classifier.norm.bias", head_norm_bias_);
  register_tensor("classifier.out.weight", out_weight_);
  register_tensor("classifier.out.bias", out_bias_);
}

void StamModel::register_tensor(std::string name, const Tensor& t) { params_.push_back({std::move(name), t}); }

void StamModel::register_mhsa(const std::string& prefix, const MhsaParams& p) {
  register_tensor(prefix + ".attn.w_q", p.w_q);
  register_tensor(prefix + ".attn.w_k", p.w_k);
  register_tensor(prefix + ".attn.w_v", p.w_v);
  register_tensor(prefix + ".attn.w_o", p.w_o);
  register_tensor(prefix + ".attn.b_o", p.b_o);
  if (p.norm_gain.defined()) {
    register_tensor(prefix + ".norm.gain", p.norm_gain);
    register_tensor(prefix + ".norm.bias", p.norm_bias);
  }
}

std::vector<Tensor> StamModel::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

Tensor& StamModel::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p.value;
  }
  throw ContractError("no parameter named '" + name + "'");
}

Tensor StamModel::classifier_head(const Tensor& fused, bool training, std::mt19937_64* rng) const {
  if (training && config_.dropout > 0.0 && rng == nullptr) throw ContractError("training forward needs an RNG");
  Tensor h = ops::relu(ops::linear(fused, head_weight_, head_bias_));
  h = ops::layernorm(h, head_norm_gain_, head_norm_bias_, config_.norm_eps);
  h = ops::leaky_relu(h, config_.leaky_slope);
  if (!training) return h;
  return ops::dropout(h, config_.dropout, true, *rng);
}

ForwardTrace StamModel::trace(const Tensor& batch, bool training, std::mt19937_64* rng) const {
  const auto& c = config_;
  if (batch.rank() != 4 || batch.dim(1) != c.septcn.in_channels || batch.dim(2) != c.frames ||
      batch.dim(3) != c.joints) {
    throw ContractError("model expects input [B, " + std::to_string(c.septcn.in_channels) + ", " +
                        std::to_string(c.frames) + ", " + std::to_string(c.joints) + "], got " +
                        to_string(batch.shape()));
  }
  const auto attn = c.attention();
  ForwardTrace t;
  t.features = septcn_forward(batch, c.septcn, septcn_);
  t.tokens = tokens_from_features(t.features);
  const Tensor& f = t.tokens;
  const Tensor& pe_s = spatial_pe_.table;
  const Tensor& pe_t = temporal_pe_.table;

  if (c.streams[kSpatialStream]) {
    t.streams.push_back(mhsa(ops::add(f, pe_s), spatial1_.params, spatial_mask_, attn));
  }
  if (c.streams[kTemporalStream]) {
    t.streams.push_back(mhsa(ops::add(f, pe_t), temporal2_.params, temporal_mask_, attn));
  }
  if (c.streams[kSpatioTemporalStream]) {
    Tensor spatial = mhsa(ops::add(f, pe_s), spatial3_.params, spatial_mask_, attn);
    t.streams.push_back(mhsa(ops::add(spatial, pe_t), temporal3_.params, temporal_mask_, attn));
  }
  if (c.streams[kResidualStream]) t.streams.push_back(f);

  t.fused = t.streams.size() == 1 ? t.streams.front() : ops::concat(t.streams, 1);
  t.head = classifier_head(t.fused, training, rng);
  t.pooled = ops::mean(t.head, 1);
  t.logits = ops::linear(t.pooled, out_weight_, out_bias_);
  return t;
}

Tensor StamModel::forward(const Tensor& batch, bool training, std::mt19937_64* rng) const {
  return trace(batch, training, rng).logits;
}

std::size_t StamModel::count_trainable() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

std::vector<std::pair<std::string, std::size_t>> StamModel::trainable_by_module() const {
  std::vector<std::pair<std::string, std::size_t>> groups;
  for (const auto& p : params_) {
    const std::string group = p.name.substr(0, p.name.find('.'));
    if (groups.empty() || groups.back().first != group) groups.emplace_back(group, 0);
    groups.back().second += p.value.numel();
  }
  return groups;
}

std::vector<std::vector<double>> StamModel::snapshot() const {
  std::vector<std::vector<double>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p.value.data().begin(), p.value.data().end());
  return out;
}

void StamModel::restore(const std::vector<std::vector<double>>& values) {
  if (values.size() != params_.size()) throw ContractError("snapshot does not match the parameter list");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto dst = params_[i].value.mutable_data();
    if (values[i].size() != dst.size()) throw ContractError("snapshot size mismatch for " + params_[i].name);
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

Tensor classification_loss(const Tensor& logits, std::span<const std::size_t> labels) {
  return ops::cross_entropy(logits, labels);
}

}  // namespace stam
