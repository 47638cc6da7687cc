// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stam/tensor.hpp"

namespace stam {

// Hand skeleton layout: wrist = 0, thumb 1-4, index 5-8, middle 9-12,
// ring 13-16, pinky 17-20; each joint carries (x, y, z).
inline constexpr std::size_t kJoints = 21;
inline constexpr std::size_t kCoords = 3;
inline constexpr std::size_t kFrameValues = kJoints * kCoords;
inline constexpr std::size_t kWristJoint = 0;
inline constexpr std::size_t kMiddleMcpJoint = 9;
inline constexpr std::size_t kCsvColumns = 3 + kFrameValues;

struct SkeletonTrial {
  std::string trial_id;
  std::size_t label = 0;
  std::vector<double> values;  // frames x joints x coords, row-major

  std::size_t frame_count() const { return values.size() / kFrameValues; }
  double& at(std::size_t frame, std::size_t joint, std::size_t coord) {
    return values[(frame * kJoints + joint) * kCoords + coord];
  }
  double at(std::size_t frame, std::size_t joint, std::size_t coord) const {
    return values[(frame * kJoints + joint) * kCoords + coord];
  }
};

// Throws DataError unless the trial has >= 1 whole frame of finite values.
void validate_trial(const SkeletonTrial& trial);

enum class Split { kUnassigned, kTrain, kTest };

std::string_view to_string(Split split);
Split split_from_string(std::string_view text);

struct ManifestEntry {
  std::string path;  // CSV holding the trial, relative to the manifest file
  std::string trial_id;
  std::size_t label = 0;
  Split split = Split::kUnassigned;
};

struct DatasetManifest {
  std::string name;
  std::vector<std::string> classes;
  std::vector<ManifestEntry> entries;
};

// Checks label bounds, trial_id uniqueness and therefore train/test
// disjointness.
void validate_manifest(const DatasetManifest& manifest);

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest parse_manifest(std::string_view json_text);
std::string serialize_manifest(const DatasetManifest& manifest);

// Loads every CSV the manifest references (paths relative to `base_dir`) and
// returns the trials in manifest entry order. Labels must agree.
std::vector<SkeletonTrial> load_manifest_trials(const DatasetManifest& manifest,
                                                const std::filesystem::path& base_dir);

// Skeleton CSV, one frame per row:
//   trial_id,frame_idx,label,x0,y0,z0,...,x20,y20,z20
std::vector<SkeletonTrial> load_csv(const std::filesystem::path& path);
std::vector<SkeletonTrial> parse_csv(std::istream& in, std::string_view source);
void write_csv(std::ostream& out, std::span<const SkeletonTrial> trials);
void save_csv(const std::filesystem::path& path, std::span<const SkeletonTrial> trials);

// Resamples to exactly `frames` frames: evenly spaced picks
// round(i * (raw - 1) / (frames - 1)) when long enough, else pads by
// repeating the final frame.
SkeletonTrial window_trial(const SkeletonTrial& trial, std::size_t frames);

// Per frame: wrist to origin, then divide by the wrist -> middle-MCP distance
// (left unscaled when that distance is below 1e-8).
SkeletonTrial normalize_trial(const SkeletonTrial& trial);

// Stratified per-class assignment of round(train_fraction * n_c) entries to
// train. Classes with fewer than two entries go entirely to train.
DatasetManifest split_manifest(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed);

struct Batch {
  Tensor inputs;  // [B, coords, frames, joints]
  std::vector<std::size_t> labels;
};

std::vector<Batch> make_batches(std::span<const SkeletonTrial> trials, std::size_t batch_size, bool shuffle,
                                std::uint64_t seed);

// Fisher-Yates driven directly by mt19937_64 output, so orders are stable
// across standard library implementations.
void deterministic_shuffle(std::vector<std::size_t>& items, std::uint64_t seed);

struct SyntheticSpec {
  std::size_t n_classes = 10;
  std::size_t trials_per_class = 50;
  std::size_t frames = 4;
  double noise_std = 0.01;
  std::uint64_t seed = 7;
  std::string name = "synthetic";
};

struct SyntheticDataset {
  std::vector<SkeletonTrial> trials;
  DatasetManifest manifest;  // entries point at "<name>.csv", unassigned split
};

// Noise- and drift-free hand pose (one frame) for `class_index`.
std::vector<double> synthetic_template(std::size_t class_index);
std::size_t max_synthetic_classes();

SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace stam
