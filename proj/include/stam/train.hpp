// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "stam/metrics.hpp"
#include "stam/model.hpp"
#include "stam/skeleton.hpp"
#include "stam/tensor.hpp"

namespace stam {

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 8;
  std::size_t max_epochs = 500;
  std::size_t patience = 100;
  std::uint64_t seed = 7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Share of a training manifest held out for early stopping when no
  // separate validation set exists.
  double validation_fraction = 0.15;
  // An epoch counts as an improvement only when the monitored loss drops
  // below the best so far by more than this.
  double min_delta = 0.0;

  // Hard violations throw ParameterError. Values outside the recommended
  // ranges (lr in [5e-6, 1e-3], batch in [8, 32]) only warn.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& doc);

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

// One bias-corrected Adam update over every parameter's accumulated
// gradient. Throws DataError, leaving all parameters untouched, when any
// gradient is non-finite.
void adam_step(std::span<Tensor> params, AdamState& state, const TrainConfig& config);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;  // percent
  double val_loss = 0.0;   // NaN when there is no validation set
  double val_acc = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_loss = 0.0;
  bool stopped_early = false;
};

// Windows every trial to the model's frame count and, when configured,
// applies wrist-root normalization.
std::vector<SkeletonTrial> prepare_trials(std::span<const SkeletonTrial> trials, const ModelConfig& config);

// Called after every completed epoch.
using EpochCallback = std::function<void(const EpochRecord&)>;

// Leaves the model holding the parameters of the best epoch.
TrainResult train(StamModel& model, std::span<const SkeletonTrial> train_trials,
                  std::span<const SkeletonTrial> val_trials, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Mean loss and accuracy (percent) in eval mode.
struct LossAccuracy {
  double loss = 0.0;
  double accuracy = 0.0;
};
LossAccuracy measure(const StamModel& model, std::span<const SkeletonTrial> trials, std::size_t batch_size);

std::vector<std::size_t> predict(const StamModel& model, std::span<const SkeletonTrial> trials,
                                 std::size_t batch_size = 32);

// Trials must already be prepared. Labels beyond the model's classes are a
// DataError.
EvalReport evaluate(const StamModel& model, std::span<const SkeletonTrial> trials, std::string configuration,
                    std::vector<std::string> class_names = {});

// epoch,train_loss,train_acc,val_loss,val_acc
void write_history(std::ostream& out, std::span<const EpochRecord> history);
void save_history(const std::filesystem::path& path, std::span<const EpochRecord> history);
std::vector<EpochRecord> load_history(const std::filesystem::path& path);

}  // namespace stam
