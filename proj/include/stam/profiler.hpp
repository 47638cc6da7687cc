// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "stam/model.hpp"

namespace stam {

// One multiply-accumulate counts as 1 MAC. Element-wise work (bias and
// residual adds, activations, softmax, normalization, pooling windows) is
// tallied separately at one op per element touched.
struct CostRow {
  std::string name;  // also the prefix of the runtime parameters it covers
  std::uint64_t params = 0;
  std::uint64_t macs = 0;         // per trial
  std::uint64_t elementwise = 0;  // per trial
};

struct CostReport {
  std::vector<CostRow> rows;
  std::uint64_t batch_size = 1;
  std::uint64_t batch_count = 1;

  std::uint64_t total_params() const;
  std::uint64_t macs_per_trial() const;
  std::uint64_t elementwise_per_trial() const;
  std::uint64_t macs_per_batch() const { return macs_per_trial() * batch_size; }
  std::uint64_t macs_per_pass() const { return macs_per_batch() * batch_count; }

  double params_millions() const { return static_cast<double>(total_params()) / 1e6; }
  static double mmac(std::uint64_t macs) { return static_cast<double>(macs) / 1e6; }
  static double bmac(std::uint64_t macs) { return static_cast<double>(macs) / 1e9; }
};

// Closed-form counts; no model is instantiated.
std::vector<CostRow> count_params(const ModelConfig& config);
CostReport count_macs(const ModelConfig& config, std::uint64_t batch_size, std::uint64_t batch_count);

struct AuditResult {
  bool ok = false;
  std::uint64_t profiled = 0;
  std::uint64_t runtime = 0;
  std::vector<std::string> offending;  // rows or parameters that disagree
};

// Every runtime array must fall under exactly one row, and per-row sums
// must match.
AuditResult audit_against_runtime(const StamModel& model);

std::string format_table(const CostReport& report);
nlohmann::json to_json(const CostReport& report);
CostReport cost_report_from_json(const nlohmann::json& doc);

}  // namespace stam
