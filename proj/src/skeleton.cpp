// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include "stam/skeleton.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "stam/error.hpp"
#include "stam/log.hpp"

namespace stam {
namespace {

using nlohmann::json;

std::string csv_header() {
  std::string header = "trial_id,frame_idx,label";
  static constexpr std::array<char, 3> kAxes{'x', 'y', 'z'};
  for (std::size_t j = 0; j < kJoints; ++j) {
    for (char axis : kAxes) {
      header += ',';
      header += axis;
      header += std::to_string(j);
    }
  }
  return header;
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw FormatError("cannot format value");
  return std::string(buf.data(), end);
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return fields;
}

[[noreturn]] void format_error(std::string_view source, std::size_t line, const std::string& what) {
  std::ostringstream msg;
  msg << source << ":" << line << ": " << what;
  throw FormatError(msg.str());
}

template <typename T>
T parse_number(std::string_view text, std::string_view source, std::size_t line, const char* column) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    format_error(source, line, std::string("cannot parse ") + column + " from '" + std::string(text) + "'");
  }
  return value;
}

// Canonical hand in its own frame: wrist at the origin, fingers along +y.
struct FingerGeometry {
  double direction;   // radians from +y
  double base_reach;  // wrist -> first finger joint
  std::array<double, 3> segments;
};

constexpr std::array<FingerGeometry, 5> kFingers{{
    {-1.00, 0.30, {0.35, 0.30, 0.25}},  // thumb
    {-0.35, 0.95, {0.45, 0.27, 0.20}},  // index
    {0.00, 1.00, {0.50, 0.30, 0.22}},   // middle
    {0.30, 0.95, {0.46, 0.28, 0.20}},   // ring
    {0.60, 0.88, {0.36, 0.22, 0.18}},   // pinky
}};
constexpr std::array<double, 3> kFlexionLevels{0.0, 0.45, 0.9};
constexpr std::size_t kPoseCodes = 243;  // 3^5
constexpr double kHandScale = 0.15;
constexpr double kDriftBound = 0.004;

}  // namespace

void validate_trial(const SkeletonTrial& trial) {
  if (trial.values.empty()) throw DataError("trial '" + trial.trial_id + "' has zero frames");
  if (trial.values.size() % kFrameValues != 0) {
    throw DataError("trial '" + trial.trial_id + "' does not hold whole 21x3 frames");
  }
  check_finite(trial.values, ("trial '" + trial.trial_id + "'").c_str());
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kTest:
      return "test";
    case Split::kUnassigned:
      break;
  }
  return "none";
}

Split split_from_string(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "test") return Split::kTest;
  if (text == "none" || text.empty()) return Split::kUnassigned;
  throw FormatError("unknown split '" + std::string(text) + "'");
}

void validate_manifest(const DatasetManifest& manifest) {
  std::set<std::string> ids;
  for (const auto& e : manifest.entries) {
    if (e.label >= manifest.classes.size()) {
      throw DataError("manifest '" + manifest.name + "': entry '" + e.trial_id + "' has label " +
                      std::to_string(e.label) + " but only " + std::to_string(manifest.classes.size()) + " classes");
    }
    if (!ids.insert(e.trial_id).second) {
      throw DataError("manifest '" + manifest.name + "': duplicate trial_id '" + e.trial_id + "'");
    }
  }
}

DatasetManifest parse_manifest(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
  }
  DatasetManifest manifest;
  try {
    manifest.name = doc.at("name").get<std::string>();
    manifest.classes = doc.at("classes").get<std::vector<std::string>>();
    for (const auto& item : doc.at("entries")) {
      ManifestEntry entry;
      entry.path = item.at("path").get<std::string>();
      entry.trial_id = item.at("trial_id").get<std::string>();
      entry.label = item.at("label").get<std::size_t>();
      entry.split = split_from_string(item.value("split", std::string()));
      manifest.entries.push_back(std::move(entry));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest schema violation: ") + e.what());
  }
  validate_manifest(manifest);
  return manifest;
}

std::string serialize_manifest(const DatasetManifest& manifest) {
  json doc;
  doc["name"] = manifest.name;
  doc["classes"] = manifest.classes;
  doc["entries"] = json::array();
  for (const auto& e : manifest.entries) {
    doc["entries"].push_back(
        {{"path", e.path}, {"trial_id", e.trial_id}, {"label", e.label}, {"split", std::string(to_string(e.split))}});
  }
  return doc.dump(2) + "\n";
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_manifest(buffer.str());
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  validate_manifest(manifest);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << serialize_manifest(manifest);
  if (!out) throw IoError("failed writing manifest " + path.string());
}

std::vector<SkeletonTrial> load_manifest_trials(const DatasetManifest& manifest,
                                                const std::filesystem::path& base_dir) {
  std::unordered_map<std::string, SkeletonTrial> by_id;
  std::set<std::string> loaded_paths;
  for (const auto& entry : manifest.entries) {
    if (!loaded_paths.insert(entry.path).second) continue;
    for (auto& trial : load_csv(base_dir / entry.path)) by_id[trial.trial_id] = std::move(trial);
  }
  std::vector<SkeletonTrial> trials;
  trials.reserve(manifest.entries.size());
  for (const auto& entry : manifest.entries) {
    auto it = by_id.find(entry.trial_id);
    if (it == by_id.end()) {
      throw DataError("manifest '" + manifest.name + "': trial '" + entry.trial_id + "' missing from " + entry.path);
    }
    if (it->second.label != entry.label) {
      throw DataError("manifest '" + manifest.name + "': trial '" + entry.trial_id + "' label disagrees with CSV");
    }
    trials.push_back(it->second);
  }
  return trials;
}

std::vector<SkeletonTrial> parse_csv(std::istream& in, std::string_view source) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) format_error(source, 1, "missing header");
  ++line_no;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != csv_header()) format_error(source, line_no, "unexpected header");

  struct Pending {
    std::size_t label;
    std::map<std::size_t, std::vector<double>> frames;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, Pending> pending;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != kCsvColumns) {
      format_error(source, line_no,
                   "expected " + std::to_string(kCsvColumns) + " columns, got " + std::to_string(fields.size()));
    }
    std::string trial_id(fields[0]);
    if (trial_id.empty()) format_error(source, line_no, "empty trial_id");
    const auto frame_idx = parse_number<std::size_t>(fields[1], source, line_no, "frame_idx");
    const auto label = parse_number<std::size_t>(fields[2], source, line_no, "label");
    std::vector<double> values(kFrameValues);
    for (std::size_t i = 0; i < kFrameValues; ++i) {
      values[i] = parse_number<double>(fields[3 + i], source, line_no, "coordinate");
      if (!std::isfinite(values[i])) {
        throw DataError(std::string(source) + ":" + std::to_string(line_no) + ": non-finite coordinate");
      }
    }
    auto [it, inserted] = pending.try_emplace(trial_id, Pending{label, {}});
    if (inserted) order.push_back(trial_id);
    if (it->second.label != label) {
      throw DataError(std::string(source) + ":" + std::to_string(line_no) + ": trial '" + trial_id +
                      "' changes label");
    }
    if (!it->second.frames.emplace(frame_idx, std::move(values)).second) {
      throw DataError(std::string(source) + ":" + std::to_string(line_no) + ": duplicate frame " +
                      std::to_string(frame_idx) + " for trial '" + trial_id + "'");
    }
  }

  std::vector<SkeletonTrial> trials;
  trials.reserve(order.size());
  for (const auto& id : order) {
    auto& p = pending.at(id);
    SkeletonTrial trial{id, p.label, {}};
    trial.values.reserve(p.frames.size() * kFrameValues);
    for (auto& [idx, values] : p.frames) trial.values.insert(trial.values.end(), values.begin(), values.end());
    validate_trial(trial);
    trials.push_back(std::move(trial));
  }
  return trials;
}

std::vector<SkeletonTrial> load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open skeleton CSV " + path.string());
  return parse_csv(in, path.string());
}

void write_csv(std::ostream& out, std::span<const SkeletonTrial> trials) {
  out << csv_header() << '\n';
  for (const auto& trial : trials) {
    validate_trial(trial);
    for (std::size_t f = 0; f < trial.frame_count(); ++f) {
      out << trial.trial_id << ',' << f << ',' << trial.label;
      for (std::size_t i = 0; i < kFrameValues; ++i) out << ',' << format_double(trial.values[f * kFrameValues + i]);
      out << '\n';
    }
  }
}

void save_csv(const std::filesystem::path& path, std::span<const SkeletonTrial> trials) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write skeleton CSV " + path.string());
  write_csv(out, trials);
  if (!out) throw IoError("failed writing skeleton CSV " + path.string());
}

SkeletonTrial window_trial(const SkeletonTrial& trial, std::size_t frames) {
  if (frames == 0) throw ParameterError("window length must be >= 1");
  validate_trial(trial);
  const std::size_t raw = trial.frame_count();
  SkeletonTrial out{trial.trial_id, trial.label, {}};
  out.values.reserve(frames * kFrameValues);
  for (std::size_t i = 0; i < frames; ++i) {
    std::size_t src;
    if (raw >= frames) {
      src = frames == 1 ? 0
                        : static_cast<std::size_t>(std::llround(static_cast<double>(i * (raw - 1)) /
                                                                static_cast<double>(frames - 1)));
    } else {
      src = std::min(i, raw - 1);
    }
    const auto first = trial.values.begin() + static_cast<std::ptrdiff_t>(src * kFrameValues);
    out.values.insert(out.values.end(), first, first + static_cast<std::ptrdiff_t>(kFrameValues));
  }
  return out;
}

SkeletonTrial normalize_trial(const SkeletonTrial& trial) {
  validate_trial(trial);
  SkeletonTrial out = trial;
  for (std::size_t f = 0; f < out.frame_count(); ++f) {
    const std::array<double, 3> wrist{out.at(f, kWristJoint, 0), out.at(f, kWristJoint, 1), out.at(f, kWristJoint, 2)};
    for (std::size_t j = 0; j < kJoints; ++j) {
      for (std::size_t c = 0; c < kCoords; ++c) out.at(f, j, c) -= wrist[c];
    }
    double reach = 0.0;
    for (std::size_t c = 0; c < kCoords; ++c) reach += out.at(f, kMiddleMcpJoint, c) * out.at(f, kMiddleMcpJoint, c);
    reach = std::sqrt(reach);
    if (reach < 1e-8) continue;
    for (std::size_t j = 0; j < kJoints; ++j) {
      for (std::size_t c = 0; c < kCoords; ++c) out.at(f, j, c) /= reach;
    }
  }
  return out;
}

void deterministic_shuffle(std::vector<std::size_t>& items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(items[i - 1], items[j]);
  }
}

DatasetManifest split_manifest(const DatasetManifest& manifest, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ParameterError("train fraction must lie in (0, 1), got " + std::to_string(train_fraction));
  }
  validate_manifest(manifest);
  DatasetManifest out = manifest;
  for (std::size_t c = 0; c < manifest.classes.size(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
      if (manifest.entries[i].label == c) members.push_back(i);
    }
    if (members.empty()) continue;
    if (members.size() < 2) {
      warn("class '" + manifest.classes[c] + "' has fewer than 2 trials; assigning all to train");
      for (auto i : members) out.entries[i].split = Split::kTrain;
      continue;
    }
    deterministic_shuffle(members, seed + 0x9E3779B97F4A7C15ULL * (c + 1));
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    for (std::size_t k = 0; k < members.size(); ++k) {
      out.entries[members[k]].split = k < n_train ? Split::kTrain : Split::kTest;
    }
  }
  return out;
}

std::vector<Batch> make_batches(std::span<const SkeletonTrial> trials, std::size_t batch_size, bool shuffle,
                                std::uint64_t seed) {
  if (batch_size == 0) throw ParameterError("batch size must be >= 1");
  std::vector<Batch> batches;
  if (trials.empty()) return batches;
  const std::size_t frames = trials.front().frame_count();
  for (const auto& t : trials) {
    validate_trial(t);
    if (t.frame_count() != frames) throw DataError("trials in one batch list must share a frame count");
  }
  std::vector<std::size_t> order(trials.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle) deterministic_shuffle(order, seed);

  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, order.size() - start);
    std::vector<double> data(count * kCoords * frames * kJoints);
    Batch batch;
    for (std::size_t b = 0; b < count; ++b) {
      const auto& trial = trials[order[start + b]];
      batch.labels.push_back(trial.label);
      for (std::size_t c = 0; c < kCoords; ++c) {
        for (std::size_t f = 0; f < frames; ++f) {
          for (std::size_t j = 0; j < kJoints; ++j) {
            data[((b * kCoords + c) * frames + f) * kJoints + j] = trial.at(f, j, c);
          }
        }
      }
    }
    batch.inputs = Tensor::from({count, kCoords, frames, kJoints}, std::move(data));
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::size_t max_synthetic_classes() { return kPoseCodes; }

std::vector<double> synthetic_template(std::size_t class_index) {
  if (class_index >= kPoseCodes) throw ParameterError("synthetic generator supports at most 243 classes");
  // 47 is coprime with 3^5, so distinct classes get distinct flexion codes.
  std::size_t code = (class_index * 47 + 11) % kPoseCodes;
  std::array<double, 5> flexion{};
  for (auto& f : flexion) {
    f = kFlexionLevels[code % 3];
    code /= 3;
  }

  std::vector<double> local(kFrameValues, 0.0);
  auto put = [&](std::size_t joint, double x, double y, double z) {
    local[joint * kCoords + 0] = x;
    local[joint * kCoords + 1] = y;
    local[joint * kCoords + 2] = z;
  };
  put(kWristJoint, 0.0, 0.0, 0.0);
  for (std::size_t f = 0; f < kFingers.size(); ++f) {
    const auto& g = kFingers[f];
    const double ux = std::sin(g.direction);
    const double uy = std::cos(g.direction);
    double x = g.base_reach * ux;
    double y = g.base_reach * uy;
    double z = 0.0;
    const std::size_t first = 1 + 4 * f;
    put(first, x, y, z);
    for (std::size_t s = 0; s < 3; ++s) {
      // Each joint bends the finger further towards the palm (-z).
      const double bend = flexion[f] * static_cast<double>(s + 1);
      x += g.segments[s] * std::cos(bend) * ux;
      y += g.segments[s] * std::cos(bend) * uy;
      z -= g.segments[s] * std::sin(bend);
      put(first + 1 + s, x, y, z);
    }
  }

  // Image-normalised placement: x right, y down, z relative depth.
  std::vector<double> pose(kFrameValues);
  for (std::size_t j = 0; j < kJoints; ++j) {
    pose[j * kCoords + 0] = 0.5 + kHandScale * local[j * kCoords + 0];
    pose[j * kCoords + 1] = 0.75 - kHandScale * local[j * kCoords + 1];
    pose[j * kCoords + 2] = kHandScale * local[j * kCoords + 2];
  }
  return pose;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_classes < 2) throw ParameterError("synthetic data needs at least 2 classes");
  if (spec.n_classes > kPoseCodes) throw ParameterError("synthetic generator supports at most 243 classes");
  if (spec.trials_per_class == 0) throw ParameterError("trials per class must be >= 1");
  if (spec.frames == 0) throw ParameterError("frames per trial must be >= 1");
  if (!(spec.noise_std >= 0.0) || !std::isfinite(spec.noise_std)) {
    throw ParameterError("noise_std must be finite and non-negative");
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  SyntheticDataset ds;
  ds.manifest.name = spec.name;
  const std::string csv_name = spec.name + ".csv";
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    std::ostringstream cls;
    cls << "class_" << c;
    ds.manifest.classes.push_back(cls.str());
  }
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    const auto pose = synthetic_template(c);
    // Drift is a property of the class gesture, not of the trial.
    std::mt19937_64 class_rng(c);
    std::uniform_real_distribution<double> drift(-kDriftBound, kDriftBound);
    const double vx = drift(class_rng);
    const double vy = drift(class_rng);
    for (std::size_t r = 0; r < spec.trials_per_class; ++r) {
      std::ostringstream id;
      id << "c" << c << "_t" << r;
      SkeletonTrial trial{id.str(), c, {}};
      trial.values.resize(spec.frames * kFrameValues);
      for (std::size_t f = 0; f < spec.frames; ++f) {
        const double t = static_cast<double>(f);
        for (std::size_t j = 0; j < kJoints; ++j) {
          for (std::size_t k = 0; k < kCoords; ++k) {
            const double shift = k == 0 ? t * vx : (k == 1 ? t * vy : 0.0);
            const double eps = noise(rng) * spec.noise_std;
            trial.at(f, j, k) = pose[j * kCoords + k] + shift + eps;
          }
        }
      }
      ds.manifest.entries.push_back({csv_name, trial.trial_id, c, Split::kUnassigned});
      ds.trials.push_back(std::move(trial));
    }
  }
  return ds;
}

}  // namespace stam
