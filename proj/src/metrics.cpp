// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include "stam/metrics.hpp"

#include <fstream>
#include <sstream>

#include "stam/error.hpp"

namespace stam {
namespace {

using nlohmann::json;

double percent(std::size_t num, std::size_t den) {
  return 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

EvalReport report_from_confusion(std::vector<std::vector<std::size_t>> confusion, std::string configuration,
                                 std::vector<std::string> class_names) {
  const std::size_t n = confusion.size();
  for (const auto& row : confusion) {
    if (row.size() != n) throw DimensionError("confusion matrix must be square");
  }
  if (!class_names.empty() && class_names.size() != n) throw DimensionError("class names do not match the matrix");
  EvalReport r;
  r.configuration = std::move(configuration);
  r.class_names = std::move(class_names);
  r.confusion = std::move(confusion);

  std::vector<std::size_t> row_sum(n, 0);
  std::vector<std::size_t> col_sum(n, 0);
  std::size_t trace = 0;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t p = 0; p < n; ++p) {
      row_sum[t] += r.confusion[t][p];
      col_sum[p] += r.confusion[t][p];
      r.total += r.confusion[t][p];
    }
    trace += r.confusion[t][t];
  }
  r.accuracy = r.total ? percent(trace, r.total) : 0.0;

  for (std::size_t c = 0; c < n; ++c) {
    ClassMetrics m;
    m.tp = r.confusion[c][c];
    m.fp = col_sum[c] - m.tp;
    m.fn = row_sum[c] - m.tp;
    m.tn = r.total - m.tp - m.fp - m.fn;
    if (m.tp + m.fp) m.precision = percent(m.tp, m.tp + m.fp);
    else m.degenerate = true;
    if (m.tp + m.fn) m.recall = percent(m.tp, m.tp + m.fn);
    else m.degenerate = true;
    if (m.precision + m.recall > 0.0) m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    else m.degenerate = true;
    if (r.total) m.ovr_accuracy = percent(m.tp + m.tn, r.total);
    r.macro_precision += m.precision;
    r.macro_recall += m.recall;
    r.macro_f1 += m.f1;
    r.per_class.push_back(m);
  }
  if (n) {
    r.macro_precision /= static_cast<double>(n);
    r.macro_recall /= static_cast<double>(n);
    r.macro_f1 /= static_cast<double>(n);
  }
  return r;
}

json to_json(const EvalReport& r) {
  json per_class = json::array();
  for (std::size_t c = 0; c < r.per_class.size(); ++c) {
    const auto& m = r.per_class[c];
    per_class.push_back({{"class", r.class_names.empty() ? std::to_string(c) : r.class_names[c]},
                         {"tp", m.tp},
                         {"fp", m.fp},
                         {"fn", m.fn},
                         {"tn", m.tn},
                         {"precision", m.precision},
                         {"recall", m.recall},
                         {"f1", m.f1},
                         {"ovr_accuracy", m.ovr_accuracy},
                         {"degenerate", m.degenerate}});
  }
  return json{{"configuration", r.configuration},
              {"classes", r.class_names},
              {"total", r.total},
              {"accuracy", r.accuracy},
              {"macro_precision", r.macro_precision},
              {"macro_recall", r.macro_recall},
              {"macro_f1", r.macro_f1},
              {"confusion", r.confusion},
              {"per_class", per_class}};
}

EvalReport eval_report_from_json(const json& doc) {
  try {
    auto report = report_from_confusion(doc.at("confusion").get<std::vector<std::vector<std::size_t>>>(),
                                        doc.at("configuration").get<std::string>(),
                                        doc.at("classes").get<std::vector<std::string>>());
    if (report.total != doc.at("total").get<std::size_t>() || doc.at("per_class").size() != report.per_class.size()) {
      throw FormatError("evaluation report totals are inconsistent");
    }
    return report;
  } catch (const json::exception& e) {
    throw FormatError(std::string("evaluation report schema violation: ") + e.what());
  }
}

void save_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write report " + path.string());
  out << to_json(report).dump(2) << '\n';
  if (!out) throw IoError("failed writing report " + path.string());
}

EvalReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report " + path.string());
  try {
    return eval_report_from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw FormatError("report " + path.string() + " is not valid JSON: " + e.what());
  }
}

}  // namespace stam
