// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include "stam/harness.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "json.hpp"
#include "stam/error.hpp"

namespace stam {
namespace {

using nlohmann::json;

const LoadedManifest& lookup(const std::map<std::string, LoadedManifest>& manifests, const std::string& key) {
  auto it = manifests.find(key);
  if (it == manifests.end()) throw DataError("configuration references unknown manifest '" + key + "'");
  if (it->second.trials.size() != it->second.manifest.entries.size()) {
    throw ContractError("manifest '" + key + "' trials are not aligned with its entries");
  }
  return it->second;
}

// Local label -> canonical label for one manifest.
std::vector<std::size_t> label_map(const ConfigurationSpec& spec, const std::string& key,
                                   const DatasetManifest& manifest, const std::vector<std::string>& canonical) {
  if (manifest.classes == canonical) {
    std::vector<std::size_t> identity(canonical.size());
    for (std::size_t i = 0; i < identity.size(); ++i) identity[i] = i;
    return identity;
  }
  auto mapping = spec.class_mapping.find(key);
  std::vector<std::size_t> out;
  for (const auto& local : manifest.classes) {
    std::string name = local;
    if (mapping != spec.class_mapping.end()) {
      auto m = mapping->second.find(local);
      if (m != mapping->second.end()) name = m->second;
    }
    auto pos = std::find(canonical.begin(), canonical.end(), name);
    if (pos == canonical.end()) {
      throw DataError("configuration '" + spec.name + "': class '" + local + "' of manifest '" + key +
                      "' is absent from the training classes" +
                      (mapping == spec.class_mapping.end() ? " (no class mapping supplied)" : ""));
    }
    out.push_back(static_cast<std::size_t>(pos - canonical.begin()));
  }
  return out;
}

DatasetManifest with_split(const DatasetManifest& manifest, std::uint64_t seed) {
  const bool assigned = !manifest.entries.empty() &&
                        std::all_of(manifest.entries.begin(), manifest.entries.end(),
                                    [](const ManifestEntry& e) { return e.split != Split::kUnassigned; });
  return assigned ? manifest : split_manifest(manifest, kTrainTestFraction, seed);
}

void append_trials(std::vector<SkeletonTrial>& out, const LoadedManifest& loaded, const DatasetManifest& split,
                   const std::vector<std::size_t>& labels, Split wanted) {
  for (std::size_t i = 0; i < split.entries.size(); ++i) {
    if (wanted != Split::kUnassigned && split.entries[i].split != wanted) continue;
    SkeletonTrial t = loaded.trials[i];
    t.trial_id = split.name + "/" + t.trial_id;
    t.label = labels.at(t.label);
    out.push_back(std::move(t));
  }
}

// Stratified hold-out of `fraction` of `trials` for validation.
void hold_out(std::vector<SkeletonTrial>& train, std::vector<SkeletonTrial>& validation, std::size_t classes,
              double fraction, std::uint64_t seed) {
  if (fraction <= 0.0 || train.empty()) return;
  DatasetManifest m;
  m.name = "validation";
  for (std::size_t c = 0; c < classes; ++c) m.classes.push_back(std::to_string(c));
  for (const auto& t : train) m.entries.push_back({"", t.trial_id, t.label, Split::kUnassigned});
  const auto split = split_manifest(m, 1.0 - fraction, seed ^ 0x5bd1e995ULL);
  std::vector<SkeletonTrial> kept;
  for (std::size_t i = 0; i < train.size(); ++i) {
    (split.entries[i].split == Split::kTest ? validation : kept).push_back(std::move(train[i]));
  }
  train = std::move(kept);
}

}  // namespace

std::string_view to_string(Category category) {
  switch (category) {
    case Category::kIntra: return "intra";
    case Category::kInter: return "inter";
    case Category::kMerge: return "merge";
  }
  return "intra";
}

Category category_from_string(std::string_view text) {
  if (text == "intra") return Category::kIntra;
  if (text == "inter") return Category::kInter;
  if (text == "merge") return Category::kMerge;
  throw ParameterError("unknown configuration category '" + std::string(text) + "'");
}

void ConfigurationSpec::validate() const {
  if (train.empty()) throw ParameterError("configuration '" + name + "' has no training manifest");
  switch (category) {
    case Category::kIntra:
      if (train.size() != 1 || train.front() != test) {
        throw ParameterError("intra configuration '" + name + "' must train and test on one manifest");
      }
      break;
    case Category::kInter:
      if (train.size() != 1 || train.front() == test) {
        throw ParameterError("inter configuration '" + name + "' needs one training manifest distinct from the test");
      }
      break;
    case Category::kMerge: {
      if (train.size() < 2) throw ParameterError("merge configuration '" + name + "' needs >= 2 training manifests");
      std::set<std::string> unique(train.begin(), train.end());
      if (unique.size() != train.size()) throw ParameterError("merge configuration '" + name + "' repeats a manifest");
      if (!unique.count(test)) {
        throw ParameterError("merge configuration '" + name + "' must test on one of its training manifests");
      }
      break;
    }
  }
}

ConfigurationPlan plan_configuration(const ConfigurationSpec& spec,
                                     const std::map<std::string, LoadedManifest>& manifests,
                                     const TrainConfig& train) {
  spec.validate();
  ConfigurationPlan plan;
  plan.name = spec.name;
  plan.category = spec.category;
  const auto& first = lookup(manifests, spec.train.front());
  plan.class_names = first.manifest.classes;

  std::set<std::string> names;
  for (const auto& key : spec.train) names.insert(lookup(manifests, key).manifest.name);
  if (spec.category != Category::kIntra) names.insert(lookup(manifests, spec.test).manifest.name);
  if (names.size() != spec.train.size() + (spec.category == Category::kInter ? 1 : 0)) {
    throw DataError("configuration '" + spec.name + "' uses manifests with clashing names");
  }

  switch (spec.category) {
    case Category::kIntra: {
      const auto split = with_split(first.manifest, train.seed);
      const auto labels = label_map(spec, spec.train.front(), split, plan.class_names);
      append_trials(plan.train, first, split, labels, Split::kTrain);
      append_trials(plan.test, first, split, labels, Split::kTest);
      break;
    }
    case Category::kInter: {
      const auto& target = lookup(manifests, spec.test);
      append_trials(plan.train, first, first.manifest, label_map(spec, spec.train.front(), first.manifest, plan.class_names),
                    Split::kUnassigned);
      append_trials(plan.test, target, target.manifest, label_map(spec, spec.test, target.manifest, plan.class_names),
                    Split::kUnassigned);
      break;
    }
    case Category::kMerge: {
      for (const auto& key : spec.train) {
        const auto& loaded = lookup(manifests, key);
        const auto split = with_split(loaded.manifest, train.seed);
        const auto labels = label_map(spec, key, split, plan.class_names);
        append_trials(plan.train, loaded, split, labels, Split::kTrain);
        if (key == spec.test) append_trials(plan.test, loaded, split, labels, Split::kTest);
      }
      break;
    }
  }
  if (plan.train.empty()) throw DataError("configuration '" + spec.name + "' has an empty training set");
  if (plan.test.empty()) throw DataError("configuration '" + spec.name + "' has an empty test set");
  hold_out(plan.train, plan.validation, plan.class_names.size(), train.validation_fraction, train.seed);
  return plan;
}

ConfigurationResult run_configuration(const ConfigurationSpec& spec,
                                      const std::map<std::string, LoadedManifest>& manifests, ModelConfig model,
                                      const TrainConfig& train_cfg, const EpochCallback& on_epoch) {
  const auto plan = plan_configuration(spec, manifests, train_cfg);
  model.n_classes = plan.class_names.size();
  model.validate();
  ConfigurationResult result;
  StamModel& net = result.model.emplace(model);
  const auto train_set = prepare_trials(plan.train, model);
  const auto val_set = prepare_trials(plan.validation, model);
  const auto test_set = prepare_trials(plan.test, model);
  result.training = train(net, train_set, val_set, train_cfg, on_epoch);
  result.report = evaluate(net, test_set, spec.name, plan.class_names);
  result.train_size = train_set.size();
  result.validation_size = val_set.size();
  result.test_size = test_set.size();
  return result;
}

std::vector<ConfigurationSpec> load_configuration_specs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open configuration list " + path.string());
  std::vector<ConfigurationSpec> specs;
  try {
    const json doc = json::parse(in);
    if (!doc.is_array()) throw FormatError("configuration list must be a JSON array");
    for (const auto& item : doc) {
      for (const auto& [key, value] : item.items()) {
        if (key != "name" && key != "category" && key != "train" && key != "test" && key != "class_mapping") {
          throw FormatError("unknown configuration key '" + key + "'");
        }
      }
      ConfigurationSpec s;
      s.name = item.at("name").get<std::string>();
      s.category = category_from_string(item.at("category").get<std::string>());
      s.train = item.at("train").get<std::vector<std::string>>();
      s.test = item.at("test").get<std::string>();
      if (item.contains("class_mapping")) {
        s.class_mapping = item.at("class_mapping").get<std::map<std::string, std::map<std::string, std::string>>>();
      }
      s.validate();
      specs.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return specs;
}

std::map<std::string, LoadedManifest> load_spec_manifests(std::span<const ConfigurationSpec> specs,
                                                          const std::filesystem::path& base_dir) {
  std::map<std::string, LoadedManifest> out;
  auto load = [&](const std::string& key) {
    if (out.count(key)) return;
    const auto path = base_dir / key;
    LoadedManifest m;
    m.manifest = load_manifest(path);
    m.trials = load_manifest_trials(m.manifest, path.parent_path());
    out.emplace(key, std::move(m));
  };
  for (const auto& s : specs) {
    for (const auto& k : s.train) load(k);
    load(s.test);
  }
  return out;
}

}  // namespace stam
