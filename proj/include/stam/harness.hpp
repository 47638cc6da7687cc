// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stam/metrics.hpp"
#include "stam/model.hpp"
#include "stam/skeleton.hpp"
#include "stam/train.hpp"

namespace stam {

// intra: one manifest split into train and test.
// inter: train on all of one manifest, test on all of another.
// merge: union of several manifests' train splits, test on one of their test splits.
enum class Category { kIntra, kInter, kMerge };

std::string_view to_string(Category category);
Category category_from_string(std::string_view text);

struct ConfigurationSpec {
  std::string name;                // report label such as "A"
  std::vector<std::string> train;  // manifest keys
  std::string test;
  Category category = Category::kIntra;
  // manifest key -> (local class name -> canonical class name). Canonical
  // classes are those of the first training manifest.
  std::map<std::string, std::map<std::string, std::string>> class_mapping;

  // Throws ParameterError when the manifest list contradicts the category.
  void validate() const;
};

struct LoadedManifest {
  DatasetManifest manifest;
  std::vector<SkeletonTrial> trials;  // aligned with manifest.entries
};

// Trial ids are prefixed with "<manifest name>/" so sets drawn from
// different manifests can never collide. Trials are raw (not prepared).
struct ConfigurationPlan {
  std::string name;
  Category category = Category::kIntra;
  std::vector<std::string> class_names;
  std::vector<SkeletonTrial> train;
  std::vector<SkeletonTrial> validation;
  std::vector<SkeletonTrial> test;
};

inline constexpr double kTrainTestFraction = 0.7;

// Manifests whose entries all carry a split keep it; otherwise a stratified
// 70/30 split seeded by `train.seed` is drawn. `train.validation_fraction`
// of the training set is held out for early stopping.
ConfigurationPlan plan_configuration(const ConfigurationSpec& spec,
                                     const std::map<std::string, LoadedManifest>& manifests,
                                     const TrainConfig& train);

struct ConfigurationResult {
  EvalReport report;
  TrainResult training;
  std::size_t train_size = 0;
  std::size_t validation_size = 0;
  std::size_t test_size = 0;
  std::optional<StamModel> model;  // trained, holding the best epoch
};

// The model's class count is taken from the plan.
ConfigurationResult run_configuration(const ConfigurationSpec& spec,
                                      const std::map<std::string, LoadedManifest>& manifests,
                                      ModelConfig model, const TrainConfig& train,
                                      const EpochCallback& on_epoch = {});

// JSON list of {"name", "category", "train": [paths], "test": path,
// "class_mapping": {path: {local: canonical}}}. Paths are manifest files
// relative to the spec file and double as manifest keys.
std::vector<ConfigurationSpec> load_configuration_specs(const std::filesystem::path& path);
std::map<std::string, LoadedManifest> load_spec_manifests(std::span<const ConfigurationSpec> specs,
                                                          const std::filesystem::path& base_dir);

}  // namespace stam
