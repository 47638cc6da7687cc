// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "stam/error.hpp"
#include "stam/harness.hpp"
#include "stam/metrics.hpp"
#include "stam/model.hpp"
#include "stam/profiler.hpp"
#include "stam/run_config.hpp"
#include "stam/runtime.hpp"
#include "stam/skeleton.hpp"
#include "stam/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool out_required) {
  cmd->add_option("--config", args.config, "JSON run config with model/train/synth sections")
      ->check(CLI::ExistingFile);
  cmd->add_option("--set", args.overrides, "Override a config key, e.g. train.learning_rate=5e-4");
  cmd->add_option("--seed", args.seed, "Seed for data generation, splits, initialization and shuffling");
  auto* out = cmd->add_option("--out", args.out, "Output directory or file");
  if (out_required) out->required();
}

stam::RunConfig resolve_config(const CommonArgs& args) {
  auto config = stam::load_run_config(args.config, args.overrides);
  if (args.seed) {
    config.model.seed = *args.seed;
    config.train.seed = *args.seed;
    config.synth.seed = *args.seed;
  }
  return config;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw stam::IoError("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw stam::IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out.flush()) throw stam::IoError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw stam::IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw stam::FormatError(path.string() + ": " + e.what());
  }
}

std::string fixed(double value, int digits = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << value;
  return s.str();
}

void print_report(const stam::EvalReport& r) {
  std::cout << "accuracy " << fixed(r.accuracy) << "%  macro precision " << fixed(r.macro_precision)
            << "%  recall " << fixed(r.macro_recall) << "%  F1 " << fixed(r.macro_f1) << "%  (" << r.total
            << " trials)\n";
}

void print_epoch(const stam::EpochRecord& r) {
  std::cout << "epoch " << r.epoch << "  train loss " << fixed(r.train_loss, 4) << " acc " << fixed(r.train_acc)
            << "%";
  if (!std::isnan(r.val_loss)) std::cout << "  val loss " << fixed(r.val_loss, 4) << " acc " << fixed(r.val_acc) << "%";
  std::cout << std::endl;
}

stam::LoadedManifest load_with_trials(const fs::path& manifest_path) {
  stam::LoadedManifest loaded;
  loaded.manifest = stam::load_manifest(manifest_path);
  loaded.trials = stam::load_manifest_trials(loaded.manifest, manifest_path.parent_path());
  return loaded;
}

void check_same_history(const std::vector<stam::EpochRecord>& a, const std::vector<stam::EpochRecord>& b,
                        const fs::path& path) {
  auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
  bool ok = a.size() == b.size();
  for (std::size_t i = 0; ok && i < a.size(); ++i) {
    ok = a[i].epoch == b[i].epoch && same(a[i].train_loss, b[i].train_loss) && same(a[i].train_acc, b[i].train_acc) &&
         same(a[i].val_loss, b[i].val_loss) && same(a[i].val_acc, b[i].val_acc);
  }
  if (!ok) throw stam::FormatError(path.string() + " does not read back to the written history");
}

// synth: skeleton CSV + manifest.
int cmd_synth(const CommonArgs& args, const std::optional<std::size_t>& classes,
              const std::optional<std::size_t>& per_class, const std::optional<std::size_t>& frames,
              const std::optional<double>& noise) {
  auto config = resolve_config(args);
  auto& spec = config.synth;
  if (classes) spec.n_classes = *classes;
  if (per_class) spec.trials_per_class = *per_class;
  if (frames) spec.frames = *frames;
  if (noise) spec.noise_std = *noise;

  const auto data = stam::generate_synthetic(spec);
  const fs::path dir = args.out;
  ensure_dir(dir);
  const fs::path csv = dir / (spec.name + ".csv");
  const fs::path manifest = dir / (spec.name + ".json");
  stam::save_csv(csv, data.trials);
  stam::save_manifest(manifest, data.manifest);

  const auto reread = load_with_trials(manifest);
  if (reread.trials.size() != data.trials.size()) throw stam::FormatError("synthetic dataset did not read back");
  for (std::size_t i = 0; i < data.trials.size(); ++i) {
    if (reread.trials[i].values != data.trials[i].values || reread.trials[i].label != data.trials[i].label) {
      throw stam::FormatError("trial " + data.trials[i].trial_id + " did not read back identically");
    }
  }
  std::cout << "wrote " << data.trials.size() << " trials (" << spec.n_classes << " classes) to " << csv.string()
            << "\nmanifest " << manifest.string() << "\n";
  return 0;
}

// train: intra-style run on one manifest; checkpoint, history and test report.
int cmd_train(const CommonArgs& args, const std::string& manifest_path, const std::optional<double>& lr,
              const std::optional<std::size_t>& epochs, const std::optional<std::size_t>& patience,
              const std::optional<std::size_t>& batch) {
  auto config = resolve_config(args);
  if (lr) config.train.learning_rate = *lr;
  if (epochs) config.train.max_epochs = *epochs;
  if (patience) config.train.patience = *patience;
  if (batch) config.train.batch_size = *batch;

  std::map<std::string, stam::LoadedManifest> manifests;
  const std::string key = fs::path(manifest_path).lexically_normal().string();
  manifests[key] = load_with_trials(manifest_path);
  stam::ConfigurationSpec spec;
  spec.name = manifests[key].manifest.name;
  spec.train = {key};
  spec.test = key;
  spec.category = stam::Category::kIntra;

  const fs::path dir = args.out;
  ensure_dir(dir);
  auto result = stam::run_configuration(spec, manifests, config.model, config.train, print_epoch);
  const stam::StamModel& model = *result.model;
  config.model = model.config();

  const fs::path ckpt = dir / "model.ckpt";
  const fs::path history = dir / "history.csv";
  const fs::path report = dir / "report.json";
  const fs::path run = dir / "run_config.json";
  stam::save_checkpoint(ckpt, model);
  stam::save_history(history, result.training.history);
  stam::save_report(report, result.report);
  write_text(run, stam::to_json(config).dump(2) + "\n");

  const auto reloaded = stam::load_checkpoint(ckpt);
  if (reloaded.count_trainable() != model.count_trainable()) throw stam::FormatError("checkpoint did not read back");
  check_same_history(result.training.history, stam::load_history(history), history);
  if (stam::load_report(report).confusion != result.report.confusion) {
    throw stam::FormatError("report did not read back");
  }
  stam::run_config_from_json(read_json(run));

  std::cout << "trained " << result.training.history.size() << " epochs (best " << result.training.best_epoch
            << "), " << result.train_size << " train / " << result.validation_size << " validation / "
            << result.test_size << " test trials\n";
  std::cout << "test ";
  print_report(result.report);
  std::cout << "checkpoint " << ckpt.string() << "\n";
  return 0;
}

// eval: checkpoint on a manifest split.
int cmd_eval(const CommonArgs& args, const std::string& checkpoint, const std::string& manifest_path,
             const std::string& split) {
  if (!fs::exists(checkpoint)) throw stam::IoError("checkpoint " + checkpoint + " does not exist");
  const auto model = stam::load_checkpoint(checkpoint);
  auto loaded = load_with_trials(manifest_path);
  auto manifest = loaded.manifest;
  const bool assigned = std::all_of(manifest.entries.begin(), manifest.entries.end(),
                                    [](const auto& e) { return e.split != stam::Split::kUnassigned; });
  if (split != "all" && !assigned) {
    const std::uint64_t seed = args.seed.value_or(stam::TrainConfig{}.seed);
    manifest = stam::split_manifest(manifest, stam::kTrainTestFraction, seed);
  }
  std::vector<stam::SkeletonTrial> chosen;
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto s = manifest.entries[i].split;
    if (split == "all" || (split == "train" && s == stam::Split::kTrain) || (split == "test" && s == stam::Split::kTest)) {
      chosen.push_back(loaded.trials[i]);
    }
  }
  if (chosen.empty()) throw stam::DataError("no trials in split '" + split + "'");
  const auto prepared = stam::prepare_trials(chosen, model.config());
  auto names = manifest.classes;
  if (names.size() != model.config().n_classes) names.clear();
  const auto report = stam::evaluate(model, prepared, manifest.name + ":" + split, names);
  if (!args.out.empty()) {
    stam::save_report(args.out, report);
    if (stam::load_report(args.out).confusion != report.confusion) throw stam::FormatError("report did not read back");
  }
  print_report(report);
  return 0;
}

// profile: closed-form parameter and MAC table, checked against a live model.
int cmd_profile(const CommonArgs& args, std::size_t batch_size, std::size_t batches) {
  const auto config = resolve_config(args);
  const auto report = stam::count_macs(config.model, batch_size, batches);
  std::cout << stam::format_table(report);
  const stam::StamModel model(config.model);
  const auto audit = stam::audit_against_runtime(model);
  std::cout << "audit: profiled " << audit.profiled << " vs runtime " << audit.runtime << " parameters: "
            << (audit.ok ? "match" : "MISMATCH") << "\n";
  if (!args.out.empty()) {
    write_text(args.out, stam::to_json(report).dump(2) + "\n");
    stam::cost_report_from_json(read_json(args.out));
  }
  if (!audit.ok) throw stam::DataError("profiler and runtime parameter counts disagree");
  return 0;
}

// configs: batch of configuration specs plus a summary table.
int cmd_configs(const CommonArgs& args, const std::string& specs_path) {
  const auto config = resolve_config(args);
  const auto specs = stam::load_configuration_specs(specs_path);
  const auto manifests = stam::load_spec_manifests(specs, fs::path(specs_path).parent_path());
  const fs::path dir = args.out;
  ensure_dir(dir);

  struct Row {
    std::string name;
    std::string category;
    std::string train;
    std::string test;
    stam::EvalReport report;
  };
  std::vector<Row> rows;
  for (const auto& spec : specs) {
    std::cout << "configuration " << spec.name << " (" << stam::to_string(spec.category) << ")\n";
    auto result = stam::run_configuration(spec, manifests, config.model, config.train, print_epoch);
    const fs::path report = dir / (spec.name + ".report.json");
    const fs::path history = dir / (spec.name + ".history.csv");
    stam::save_report(report, result.report);
    stam::save_history(history, result.training.history);
    if (stam::load_report(report).confusion != result.report.confusion) {
      throw stam::FormatError("report did not read back");
    }
    check_same_history(result.training.history, stam::load_history(history), history);
    std::string train;
    for (const auto& t : spec.train) train += (train.empty() ? "" : "+") + manifests.at(t).manifest.name;
    rows.push_back({spec.name, std::string(stam::to_string(spec.category)), train,
                    manifests.at(spec.test).manifest.name, result.report});
  }

  std::ostringstream table;
  table << std::left << std::setw(14) << "Configuration" << std::setw(8) << "Type" << std::setw(24) << "Train"
        << std::setw(16) << "Test" << std::right << std::setw(10) << "Accuracy" << std::setw(11) << "Precision"
        << std::setw(9) << "Recall" << std::setw(9) << "F1" << "\n";
  for (const auto& r : rows) {
    table << std::left << std::setw(14) << r.name << std::setw(8) << r.category << std::setw(24) << r.train
          << std::setw(16) << r.test << std::right << std::setw(10) << fixed(r.report.accuracy) << std::setw(11)
          << fixed(r.report.macro_precision) << std::setw(9) << fixed(r.report.macro_recall) << std::setw(9)
          << fixed(r.report.macro_f1) << "\n";
  }
  write_text(dir / "summary.txt", table.str());
  std::cout << table.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  stam::configure_allocator();
  CLI::App app{"Spatio-temporal attention hand-sign classifier"};
  app.require_subcommand(1);

  CommonArgs synth_args;
  std::optional<std::size_t> classes, per_class, frames;
  std::optional<double> noise;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic skeleton dataset");
  add_common(synth, synth_args, true);
  synth->add_option("--classes", classes, "Number of classes")->check(CLI::PositiveNumber);
  synth->add_option("--per-class", per_class, "Trials per class")->check(CLI::PositiveNumber);
  synth->add_option("--frames", frames, "Frames per trial")->check(CLI::PositiveNumber);
  synth->add_option("--noise", noise, "Gaussian noise standard deviation")->check(CLI::NonNegativeNumber);

  CommonArgs train_args;
  std::string train_manifest;
  std::optional<double> lr;
  std::optional<std::size_t> epochs, patience, batch;
  auto* train = app.add_subcommand("train", "Train on a manifest and save the best checkpoint");
  add_common(train, train_args, true);
  train->add_option("--manifest", train_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--lr", lr, "Learning rate");
  train->add_option("--epochs", epochs, "Maximum epochs")->check(CLI::PositiveNumber);
  train->add_option("--patience", patience, "Early-stopping patience")->check(CLI::PositiveNumber);
  train->add_option("--batch", batch, "Batch size")->check(CLI::PositiveNumber);

  CommonArgs eval_args;
  std::string checkpoint, eval_manifest, split = "all";
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a manifest");
  add_common(eval, eval_args, false);
  eval->add_option("--checkpoint", checkpoint, "Model checkpoint")->required();
  eval->add_option("--manifest", eval_manifest, "Dataset manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split, "Which entries to evaluate")
      ->check(CLI::IsMember({"all", "train", "test"}))
      ->capture_default_str();

  CommonArgs profile_args;
  std::size_t profile_batch = 8, profile_batches = 127;
  auto* profile = app.add_subcommand("profile", "Print the parameter and MAC table");
  add_common(profile, profile_args, false);
  profile->add_option("--batch-size", profile_batch, "Trials per batch")->check(CLI::PositiveNumber)
      ->capture_default_str();
  profile->add_option("--batches", profile_batches, "Batches per dataset pass")->check(CLI::PositiveNumber)
      ->capture_default_str();

  CommonArgs configs_args;
  std::string specs_path;
  auto* configs = app.add_subcommand("configs", "Run a list of dataset configurations");
  add_common(configs, configs_args, true);
  configs->add_option("--specs", specs_path, "JSON list of configuration specs")->required()
      ->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth) return cmd_synth(synth_args, classes, per_class, frames, noise);
    if (*train) return cmd_train(train_args, train_manifest, lr, epochs, patience, batch);
    if (*eval) return cmd_eval(eval_args, checkpoint, eval_manifest, split);
    if (*profile) return cmd_profile(profile_args, profile_batch, profile_batches);
    if (*configs) return cmd_configs(configs_args, specs_path);
  } catch (const stam::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
