// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace stam {

// One-vs-rest counts and percentages for a single class.
struct ClassMetrics {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;
  double precision = 0.0;      // TP / (TP + FP)
  double recall = 0.0;         // TP / (TP + FN)
  double f1 = 0.0;             // 2PR / (P + R)
  double ovr_accuracy = 0.0;   // (TP + TN) / total, includes true negatives
  bool degenerate = false;     // some denominator was zero; affected metrics are 0
};

struct EvalReport {
  std::string configuration;
  std::vector<std::string> class_names;
  std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
  std::vector<ClassMetrics> per_class;
  std::size_t total = 0;
  double accuracy = 0.0;  // trace / total
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
};

// All metrics are percentages in [0, 100].
EvalReport report_from_confusion(std::vector<std::vector<std::size_t>> confusion, std::string configuration,
                                 std::vector<std::string> class_names = {});

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& doc);
void save_report(const std::filesystem::path& path, const EvalReport& report);
EvalReport load_report(const std::filesystem::path& path);

}  // namespace stam
