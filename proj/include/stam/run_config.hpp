// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>

#include "json.hpp"
#include "stam/model.hpp"
#include "stam/skeleton.hpp"
#include "stam/train.hpp"

namespace stam {

// Everything a CLI run needs, loaded from one JSON file:
//   {"model": {...}, "train": {...}, "synth": {...}}
// Every section and key is optional; unknown keys are rejected.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SyntheticSpec synth;
};

nlohmann::json to_json(const RunConfig& config);
nlohmann::json to_json(const SyntheticSpec& spec);
RunConfig run_config_from_json(const nlohmann::json& doc);
SyntheticSpec synthetic_spec_from_json(const nlohmann::json& doc);

// Applies "section.key=value" overrides. Values are parsed as JSON when
// possible and otherwise taken as strings, so "model.mask_mode=additive"
// and "train.learning_rate=5e-4" both work.
void apply_override(nlohmann::json& doc, const std::string& assignment);

// Defaults, then the optional file, then overrides, then validation.
RunConfig load_run_config(const std::filesystem::path& path, std::span<const std::string> overrides);

}  // namespace stam
