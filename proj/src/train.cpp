// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include "stam/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "stam/error.hpp"
#include "stam/log.hpp"
#include "stam/ops.hpp"

namespace stam {
namespace {

using nlohmann::json;

std::size_t argmax_row(std::span<const double> row) {
  return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::size_t count_correct(const Tensor& logits, std::span<const std::size_t> labels) {
  const std::size_t classes = logits.dim(-1);
  const auto data = logits.data();
  std::size_t correct = 0;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (argmax_row(data.subspan(b * classes, classes)) == labels[b]) ++correct;
  }
  return correct;
}

void append_double(std::string& out, double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

double parse_double(std::string_view field, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc() || res.ptr != field.data() + field.size()) {
    throw FormatError(where + ": bad number '" + std::string(field) + "'");
  }
  return v;
}

template <typename T>
void read_key(const json& doc, const char* key, T& out) {
  if (doc.contains(key)) out = doc.at(key).get<T>();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ParameterError("learning rate must be > 0");
  if (batch_size == 0) throw ParameterError("batch size must be positive");
  if (max_epochs == 0 || max_epochs > 1000) throw ParameterError("max epochs must lie in [1, 1000]");
  if (patience < 1) throw ParameterError("patience must be >= 1");
  if (!(min_delta >= 0.0) || !std::isfinite(min_delta)) throw ParameterError("min delta must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ParameterError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ParameterError("Adam epsilon must be > 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ParameterError("validation fraction must lie in [0, 1)");
  }
  if (learning_rate < 5e-6 || learning_rate > 1e-3) {
    warn("learning rate " + std::to_string(learning_rate) + " is outside the recommended range [5e-6, 1e-3]");
  }
  if (batch_size < 8 || batch_size > 32) {
    warn("batch size " + std::to_string(batch_size) + " is outside the recommended range [8, 32]");
  }
  if (patience > max_epochs) warn("patience exceeds max epochs; early stopping cannot trigger");
}

json to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
              {"max_epochs", c.max_epochs},       {"patience", c.patience},
              {"seed", c.seed},                   {"beta1", c.beta1},
              {"beta2", c.beta2},                 {"epsilon", c.epsilon},
              {"validation_fraction", c.validation_fraction}, {"min_delta", c.min_delta}};
}

TrainConfig train_config_from_json(const json& doc) {
  if (!doc.is_object()) throw ParameterError("train config must be a JSON object");
  static const std::vector<std::string> known = {"learning_rate", "batch_size", "max_epochs",
                                                 "patience",      "seed",       "beta1",
                                                 "beta2",         "epsilon",    "validation_fraction",
                                                 "min_delta"};
  for (const auto& [key, value] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ParameterError("unknown train config key '" + key + "'");
    }
  }
  TrainConfig c;
  try {
    read_key(doc, "learning_rate", c.learning_rate);
    read_key(doc, "batch_size", c.batch_size);
    read_key(doc, "max_epochs", c.max_epochs);
    read_key(doc, "patience", c.patience);
    read_key(doc, "seed", c.seed);
    read_key(doc, "beta1", c.beta1);
    read_key(doc, "beta2", c.beta2);
    read_key(doc, "epsilon", c.epsilon);
    read_key(doc, "validation_fraction", c.validation_fraction);
    read_key(doc, "min_delta", c.min_delta);
  } catch (const json::exception& e) {
    throw ParameterError(std::string("train config: ") + e.what());
  }
  return c;
}

void adam_step(std::span<Tensor> params, AdamState& state, const TrainConfig& config) {
  for (auto& p : params) {
    if (p.has_grad()) check_finite(p.grad(), "gradient");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0);
      state.v.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ContractError("Adam state does not match the parameter list");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) continue;
    auto w = params[i].mutable_data();
    const auto g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      w[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

std::vector<SkeletonTrial> prepare_trials(std::span<const SkeletonTrial> trials, const ModelConfig& config) {
  std::vector<SkeletonTrial> out;
  out.reserve(trials.size());
  for (const auto& t : trials) {
    auto w = window_trial(t, config.frames);
    out.push_back(config.normalize_input ? normalize_trial(w) : std::move(w));
  }
  return out;
}

LossAccuracy measure(const StamModel& model, std::span<const SkeletonTrial> trials, std::size_t batch_size) {
  LossAccuracy r;
  if (trials.empty()) return r;
  NoGradGuard guard;
  double loss = 0.0;
  std::size_t correct = 0;
  for (const auto& batch : make_batches(trials, batch_size, false, 0)) {
    const Tensor logits = model.forward(batch.inputs, false);
    loss += classification_loss(logits, batch.labels).item() * static_cast<double>(batch.labels.size());
    correct += count_correct(logits, batch.labels);
  }
  const auto n = static_cast<double>(trials.size());
  r.loss = loss / n;
  r.accuracy = 100.0 * static_cast<double>(correct) / n;
  return r;
}

TrainResult train(StamModel& model, std::span<const SkeletonTrial> train_trials,
                  std::span<const SkeletonTrial> val_trials, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_trials.empty()) throw DataError("training set is empty");
  const bool use_val = !val_trials.empty();
  if (!use_val) warn("validation set is empty; early stopping monitors the training loss");

  auto params = model.parameter_tensors();
  AdamState adam;
  std::mt19937_64 dropout_rng(config.seed);
  TrainResult result;
  result.best_loss = std::numeric_limits<double>::infinity();
  auto best = model.snapshot();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto batches = make_batches(train_trials, config.batch_size, true, config.seed + epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t seen = 0;
    for (const auto& batch : batches) {
      for (auto& p : params) p.zero_grad();
      Tape tape;
      const Tensor logits = model.forward(batch.inputs, true, &dropout_rng);
      const Tensor loss = classification_loss(logits, batch.labels);
      tape.backward(loss);
      try {
        adam_step(params, adam, config);
      } catch (const DataError& e) {
        warn("epoch " + std::to_string(epoch) + " aborted: " + e.what());
        break;
      }
      loss_sum += loss.item() * static_cast<double>(batch.labels.size());
      correct += count_correct(logits, batch.labels);
      seen += batch.labels.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    if (seen) {
      rec.train_loss = loss_sum / static_cast<double>(seen);
      rec.train_acc = 100.0 * static_cast<double>(correct) / static_cast<double>(seen);
    } else {
      rec.train_loss = std::numeric_limits<double>::quiet_NaN();
    }
    if (use_val) {
      const auto v = measure(model, val_trials, std::max<std::size_t>(config.batch_size, 32));
      rec.val_loss = v.loss;
      rec.val_acc = v.accuracy;
    } else {
      rec.val_loss = std::numeric_limits<double>::quiet_NaN();
      rec.val_acc = std::numeric_limits<double>::quiet_NaN();
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const double monitored = use_val ? rec.val_loss : rec.train_loss;
    if (std::isfinite(monitored) && monitored < result.best_loss - config.min_delta) {
      result.best_loss = monitored;
      result.best_epoch = epoch;
      best = model.snapshot();
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  model.restore(best);
  return result;
}

std::vector<std::size_t> predict(const StamModel& model, std::span<const SkeletonTrial> trials,
                                 std::size_t batch_size) {
  NoGradGuard guard;
  std::vector<std::size_t> out;
  out.reserve(trials.size());
  for (const auto& batch : make_batches(trials, batch_size, false, 0)) {
    const Tensor logits = model.forward(batch.inputs, false);
    const std::size_t classes = logits.dim(-1);
    for (std::size_t b = 0; b < batch.labels.size(); ++b) {
      out.push_back(argmax_row(logits.data().subspan(b * classes, classes)));
    }
  }
  return out;
}

EvalReport evaluate(const StamModel& model, std::span<const SkeletonTrial> trials, std::string configuration,
                    std::vector<std::string> class_names) {
  const std::size_t n = model.config().n_classes;
  for (const auto& t : trials) {
    if (t.label >= n) {
      throw DataError("trial '" + t.trial_id + "' has label " + std::to_string(t.label) +
                      " unknown to a model with " + std::to_string(n) + " classes");
    }
  }
  std::vector<std::vector<std::size_t>> confusion(n, std::vector<std::size_t>(n, 0));
  const auto predicted = predict(model, trials);
  for (std::size_t i = 0; i < trials.size(); ++i) ++confusion[trials[i].label][predicted[i]];
  return report_from_confusion(std::move(confusion), std::move(configuration), std::move(class_names));
}

void write_history(std::ostream& out, std::span<const EpochRecord> history) {
  std::string text = "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const auto& r : history) {
    text += std::to_string(r.epoch);
    for (double v : {r.train_loss, r.train_acc, r.val_loss, r.val_acc}) {
      text += ',';
      append_double(text, v);
    }
    text += '\n';
  }
  out << text;
}

void save_history(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write history " + path.string());
  write_history(out, history);
  if (!out) throw IoError("failed writing history " + path.string());
}

std::vector<EpochRecord> load_history(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open history " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "epoch,train_loss,train_acc,val_loss,val_acc") {
    throw FormatError(path.string() + ": missing history header");
  }
  std::vector<EpochRecord> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    std::vector<std::string_view> fields;
    std::string_view rest = line;
    for (;;) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() != 5) throw FormatError(where + ": expected 5 columns");
    EpochRecord r;
    r.epoch = static_cast<std::size_t>(parse_double(fields[0], where));
    r.train_loss = parse_double(fields[1], where);
    r.train_acc = parse_double(fields[2], where);
    r.val_loss = parse_double(fields[3], where);
    r.val_acc = parse_double(fields[4], where);
    if (r.epoch != out.size() + 1) throw FormatError(where + ": epochs must be consecutive from 1");
    out.push_back(r);
  }
  return out;
}

}  // namespace stam
