// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include "stam/profiler.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include "stam/error.hpp"
#include "stam/ops.hpp"

namespace stam {
namespace {

using u64 = std::uint64_t;

struct Builder {
  std::vector<CostRow> rows;
  void add(std::string name, u64 params, u64 macs, u64 elementwise) {
    rows.push_back({std::move(name), params, macs, elementwise});
  }
};

// Returns the pooled frame count of the block.
u64 septcn_block_rows(Builder& b, const std::string& prefix, u64 c_in, u64 c_out, u64 kernel, u64 stride,
                      u64 pool, u64 frames, u64 joints) {
  const u64 t_out = ops::temporal_output_length(frames, {kernel, stride, (kernel - 1) / 2});
  const u64 sites = t_out * joints;
  b.add(prefix + ".dw", c_in * kernel + c_in, c_in * sites * kernel, c_in * sites);
  b.add(prefix + ".pw", c_in * c_out + c_out, c_out * sites * c_in, c_out * sites);
  if (c_in != c_out) b.add(prefix + ".proj", c_in * c_out + c_out, c_out * sites * c_in, c_out * sites);
  // residual add, ReLU, then one comparison per pooling tap
  const u64 pooled = ops::temporal_output_length(t_out, {pool, 1, (pool - 1) / 2});
  b.add(prefix + ".merge", 0, 0, 2 * c_out * sites + c_out * pooled * joints * pool);
  return pooled;
}

void mhsa_rows(Builder& b, const std::string& prefix, const AttentionConfig& a, u64 tokens) {
  const u64 c = a.channels;
  const u64 md = static_cast<u64>(a.heads) * a.head_dim;
  const u64 l = tokens;
  const u64 params = 3 * c * md + md * c + c;
  const u64 macs = 3 * l * c * md + 2 * a.heads * l * l * a.head_dim + l * md * c;
  // embedding add, logit scaling, mask, softmax, output bias
  u64 elementwise = l * c + a.heads * l * l * (a.scaled ? 3 : 2) + l * c;
  b.add(prefix + ".attn", params, macs, elementwise);
  if (a.residual_norm) b.add(prefix + ".norm", 2 * c, 0, 2 * l * c);
}

std::vector<CostRow> build_rows(const ModelConfig& cfg) {
  cfg.validate();
  Builder b;
  const auto& s = cfg.septcn;
  const u64 n = cfg.joints;
  const u64 t1 = septcn_block_rows(b, "septcn.block1", s.in_channels, s.mid_channels, s.kernel1, s.stride1,
                                   s.pool_kernel, cfg.frames, n);
  septcn_block_rows(b, "septcn.block2", s.mid_channels, s.out_channels, s.kernel2, s.stride2, s.pool_kernel, t1, n);

  const u64 l = cfg.tokens();
  const u64 c = cfg.channels();
  const auto attn = cfg.attention();
  if (cfg.streams[kSpatialStream]) mhsa_rows(b, "stream1.spatial", attn, l);
  if (cfg.streams[kTemporalStream]) mhsa_rows(b, "stream2.temporal", attn, l);
  if (cfg.streams[kSpatioTemporalStream]) {
    mhsa_rows(b, "stream3.spatial", attn, l);
    mhsa_rows(b, "stream3.temporal", attn, l);
  }

  const u64 fused = cfg.enabled_streams() * l;
  const u64 w = cfg.classifier_width;
  const u64 k = cfg.n_classes;
  // bias add and ReLU
  b.add("classifier.fc", c * w + w, fused * c * w, 2 * fused * w);
  // normalization, leaky ReLU
  b.add("classifier.norm", 2 * w, 0, 3 * fused * w);
  b.add("classifier.pool", 0, 0, fused * w);
  b.add("classifier.out", w * k + k, w * k, k);
  return b.rows;
}

void pad_to(std::string& s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

u64 CostReport::total_params() const {
  u64 n = 0;
  for (const auto& r : rows) n += r.params;
  return n;
}

u64 CostReport::macs_per_trial() const {
  u64 n = 0;
  for (const auto& r : rows) n += r.macs;
  return n;
}

u64 CostReport::elementwise_per_trial() const {
  u64 n = 0;
  for (const auto& r : rows) n += r.elementwise;
  return n;
}

std::vector<CostRow> count_params(const ModelConfig& config) { return build_rows(config); }

CostReport count_macs(const ModelConfig& config, u64 batch_size, u64 batch_count) {
  if (batch_size == 0) throw ParameterError("batch size must be positive");
  CostReport r;
  r.rows = build_rows(config);
  r.batch_size = batch_size;
  r.batch_count = batch_count;
  return r;
}

AuditResult audit_against_runtime(const StamModel& model) {
  AuditResult out;
  const auto rows = count_params(model.config());
  std::map<std::string, u64> runtime_by_row;
  for (const auto& p : model.parameters()) {
    out.runtime += p.value.numel();
    std::size_t matches = 0;
    for (const auto& row : rows) {
      if (p.name.rfind(row.name + ".", 0) == 0) {
        runtime_by_row[row.name] += p.value.numel();
        ++matches;
      }
    }
    if (matches != 1) out.offending.push_back(p.name);
  }
  for (const auto& row : rows) {
    out.profiled += row.params;
    if (runtime_by_row[row.name] != row.params) out.offending.push_back(row.name);
  }
  out.ok = out.offending.empty() && out.profiled == out.runtime;
  return out;
}

std::string format_table(const CostReport& r) {
  std::ostringstream os;
  std::string head = "Layer";
  pad_to(head, 26);
  os << head << "      Params        MACs  Elementwise\n";
  for (const auto& row : r.rows) {
    std::string name = row.name;
    pad_to(name, 26);
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%12llu%12llu%13llu\n", static_cast<unsigned long long>(row.params),
                  static_cast<unsigned long long>(row.macs), static_cast<unsigned long long>(row.elementwise));
    os << name << buf;
  }
  std::string total = "total (per trial)";
  pad_to(total, 26);
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%12llu%12llu%13llu\n", static_cast<unsigned long long>(r.total_params()),
                static_cast<unsigned long long>(r.macs_per_trial()),
                static_cast<unsigned long long>(r.elementwise_per_trial()));
  os << total << buf << '\n';

  os << "Granularity   Batches  Parameter (M)  Flops (BMac)  MMac        FLOPs (~2xMAC)\n";
  auto line = [&](const char* label, u64 batches, u64 macs) {
    std::string l = label;
    pad_to(l, 14);
    std::string b = std::to_string(batches);
    pad_to(b, 9);
    std::string p = fixed(r.params_millions(), 5);
    pad_to(p, 15);
    std::string g = fixed(CostReport::bmac(macs), 4);
    pad_to(g, 14);
    std::string m = fixed(CostReport::mmac(macs), 3);
    pad_to(m, 12);
    os << l << b << p << g << m << 2 * macs << '\n';
  };
  line("trial", 0, r.macs_per_trial());
  line("batch", 1, r.macs_per_batch());
  line("dataset pass", r.batch_count, r.macs_per_pass());
  os << "batch size " << r.batch_size << '\n';
  return os.str();
}

nlohmann::json to_json(const CostReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"name", row.name}, {"params", row.params}, {"macs", row.macs}, {"elementwise", row.elementwise}});
  }
  return {{"rows", rows},
          {"batch_size", r.batch_size},
          {"batch_count", r.batch_count},
          {"total_params", r.total_params()},
          {"params_millions", r.params_millions()},
          {"macs_per_trial", r.macs_per_trial()},
          {"macs_per_batch", r.macs_per_batch()},
          {"macs_per_pass", r.macs_per_pass()},
          {"bmac_per_pass", CostReport::bmac(r.macs_per_pass())},
          {"flops_per_pass", 2 * r.macs_per_pass()},
          {"elementwise_per_trial", r.elementwise_per_trial()}};
}

CostReport cost_report_from_json(const nlohmann::json& doc) {
  try {
    CostReport r;
    for (const auto& row : doc.at("rows")) {
      r.rows.push_back({row.at("name").get<std::string>(), row.at("params").get<u64>(), row.at("macs").get<u64>(),
                        row.at("elementwise").get<u64>()});
    }
    r.batch_size = doc.at("batch_size").get<u64>();
    r.batch_count = doc.at("batch_count").get<u64>();
    if (doc.at("total_params").get<u64>() != r.total_params() ||
        doc.at("macs_per_pass").get<u64>() != r.macs_per_pass()) {
      throw FormatError("cost report totals disagree with its rows");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("cost report schema violation: ") + e.what());
  }
}

}  // namespace stam
