// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include "stam/run_config.hpp"

#include <fstream>

#include "stam/error.hpp"

namespace stam {

using nlohmann::json;

json to_json(const SyntheticSpec& s) {
  return json{{"n_classes", s.n_classes}, {"trials_per_class", s.trials_per_class},
              {"frames", s.frames},       {"noise_std", s.noise_std},
              {"seed", s.seed},           {"name", s.name}};
}

SyntheticSpec synthetic_spec_from_json(const json& doc) {
  if (!doc.is_object()) throw ParameterError("synth config must be a JSON object");
  SyntheticSpec s;
  const json defaults = to_json(s);
  for (const auto& [key, value] : doc.items()) {
    if (!defaults.contains(key)) throw ParameterError("unknown synth config key '" + key + "'");
  }
  try {
    if (doc.contains("n_classes")) s.n_classes = doc.at("n_classes").get<std::size_t>();
    if (doc.contains("trials_per_class")) s.trials_per_class = doc.at("trials_per_class").get<std::size_t>();
    if (doc.contains("frames")) s.frames = doc.at("frames").get<std::size_t>();
    if (doc.contains("noise_std")) s.noise_std = doc.at("noise_std").get<double>();
    if (doc.contains("seed")) s.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("name")) s.name = doc.at("name").get<std::string>();
  } catch (const json::exception& e) {
    throw ParameterError(std::string("synth config: ") + e.what());
  }
  return s;
}

json to_json(const RunConfig& c) {
  return json{{"model", to_json(c.model)}, {"train", to_json(c.train)}, {"synth", to_json(c.synth)}};
}

RunConfig run_config_from_json(const json& doc) {
  if (!doc.is_object()) throw ParameterError("run config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key != "model" && key != "train" && key != "synth") {
      throw ParameterError("unknown run config section '" + key + "'");
    }
  }
  RunConfig c;
  if (doc.contains("model")) c.model = model_config_from_json(doc.at("model"));
  if (doc.contains("train")) c.train = train_config_from_json(doc.at("train"));
  if (doc.contains("synth")) c.synth = synthetic_spec_from_json(doc.at("synth"));
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ParameterError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ParameterError("override key '" + path + "' has an empty component");
    if (!node->is_object()) throw ParameterError("override key '" + path + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::filesystem::path& path, std::span<const std::string> overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) throw FormatError("config " + path.string() + " is not valid JSON");
  }
  for (const auto& o : overrides) apply_override(doc, o);
  RunConfig c = run_config_from_json(doc);
  c.model.validate();
  return c;
}

}  // namespace stam
