// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance runner: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. Optional arguments select criteria by
// key, e.g. `stam_acceptance masks metrics`.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "stam/attention.hpp"
#include "stam/embedding.hpp"
#include "stam/harness.hpp"
#include "stam/metrics.hpp"
#include "stam/model.hpp"
#include "stam/ops.hpp"
#include "stam/profiler.hpp"
#include "stam/runtime.hpp"
#include "stam/septcn.hpp"
#include "support.hpp"

namespace stam {
namespace {

using testing::away_from_zero;
using testing::gradcheck;
using testing::random_tensor;
using Clock = std::chrono::steady_clock;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, value);
  return buf;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

// Distinct values at least 0.1 apart, so no window maximum changes under a
// finite-difference step.
Tensor distinct_values(Shape shape, std::mt19937_64& rng) {
  std::vector<double> v(numel(shape));
  std::iota(v.begin(), v.end(), 0.0);
  std::shuffle(v.begin(), v.end(), rng);
  for (auto& x : v) x = 0.1 * x - 1.0;
  return Tensor::from(std::move(shape), std::move(v), true);
}

Verdict gradient_fidelity() {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  struct Case {
    std::string name;
    std::function<Tensor()> f;
    std::vector<Tensor> inputs;
  };
  std::vector<Case> cases;

  Tensor a = random_tensor({2, 3, 4}, rng, -1, 1, true), b = random_tensor({2, 4, 5}, rng, -1, 1, true);
  cases.push_back({"matmul", [=] { return ops::matmul(a, b); }, {a, b}});
  Tensor m = random_tensor({4, 5}, rng, -1, 1, true);
  cases.push_back({"matmul_broadcast", [=] { return ops::matmul(a, m); }, {a, m}});
  Tensor x = random_tensor({3, 4}, rng, -1, 1, true), w = random_tensor({4, 6}, rng, -1, 1, true),
         bias = random_tensor({6}, rng, -1, 1, true);
  cases.push_back({"linear", [=] { return ops::linear(x, w, bias); }, {x, w, bias}});
  cases.push_back({"transpose", [=] { return ops::transpose_last(a); }, {a}});
  cases.push_back({"permute", [=] { return ops::permute(a, {2, 0, 1}); }, {a}});
  cases.push_back({"reshape", [=] { return ops::reshape(a, {6, 4}); }, {a}});
  Tensor row = random_tensor({4}, rng, -1, 1, true);
  cases.push_back({"add", [=] { return ops::add(a, row); }, {a, row}});
  cases.push_back({"mul", [=] { return ops::mul(a, row); }, {a, row}});
  cases.push_back({"scale", [=] { return ops::scale(a, -1.7); }, {a}});
  cases.push_back({"sum", [=] { return ops::sum(a); }, {a}});
  cases.push_back({"mean", [=] { return ops::mean(a, 1); }, {a}});
  Tensor kinked = away_from_zero({3, 5}, rng);
  cases.push_back({"relu", [=] { return ops::relu(kinked); }, {kinked}});
  cases.push_back({"leaky_relu", [=] { return ops::leaky_relu(kinked, 0.1); }, {kinked}});
  cases.push_back({"dropout", [=] {
                     std::mt19937_64 r(5);
                     return ops::dropout(kinked, 0.3, true, r);
                   },
                   {kinked}});
  Tensor c1 = random_tensor({2, 3}, rng, -1, 1, true), c2 = random_tensor({2, 2}, rng, -1, 1, true);
  cases.push_back({"concat", [=] { return ops::concat(std::vector<Tensor>{c1, c2}, 1); }, {c1, c2}});
  Tensor logits = random_tensor({3, 6}, rng, -3, 3, true);
  cases.push_back({"softmax", [=] { return ops::softmax(logits, -1); }, {logits}});
  cases.push_back({"softmax_axis0", [=] { return ops::softmax(logits, 0); }, {logits}});
  const Tensor mask_bias = build_mask(AxisKind::kSpatial, 2, 3).additive_bias();
  Tensor scores = random_tensor({2, 6, 6}, rng, -2, 2, true);
  cases.push_back({"scaled_softmax", [=] { return ops::scaled_softmax(scores, 0.25, mask_bias); }, {scores}});
  Tensor gain = random_tensor({6}, rng, 0.5, 1.5, true), shift = random_tensor({6}, rng, -0.5, 0.5, true);
  cases.push_back({"layernorm", [=] { return ops::layernorm(logits, gain, shift, 1e-5); }, {logits, gain, shift}});
  Tensor cx = random_tensor({2, 4, 7, 3}, rng, -1, 1, true), cw = random_tensor({6, 2, 3}, rng, -1, 1, true),
         cb = random_tensor({6}, rng, -1, 1, true), dw = random_tensor({4, 1, 5}, rng, -1, 1, true);
  cases.push_back({"conv_grouped", [=] { return ops::conv_temporal(cx, cw, cb, 2, 1, 2); }, {cx, cw, cb}});
  cases.push_back({"conv_depthwise", [=] { return ops::conv_temporal(cx, dw, Tensor(), 1, 2, 4); }, {cx, dw}});
  Tensor px = distinct_values({2, 6, 3}, rng);
  cases.push_back({"maxpool", [=] { return ops::maxpool_temporal(px, {3, 1, 1}); }, {px}});
  cases.push_back({"maxpool_strided", [=] { return ops::maxpool_temporal(px, {2, 2, 0}); }, {px}});
  cases.push_back({"subsample", [=] { return ops::subsample_temporal(px, 2); }, {px}});
  const std::vector<std::size_t> labels{0, 5, 2};
  cases.push_back({"cross_entropy", [=] { return ops::cross_entropy(logits, labels); }, {logits}});

  for (MaskMode mode : {MaskMode::kAdditive, MaskMode::kMultiplicative}) {
    AttentionConfig cfg{.channels = 8, .heads = 2, .head_dim = 4};
    cfg.mask_mode = mode;
    auto p = init_mhsa(cfg, rng);
    p.b_o = random_tensor({8}, rng, -0.5, 0.5, true);
    p.norm_gain = random_tensor({8}, rng, 0.5, 1.5, true);
    p.norm_bias = random_tensor({8}, rng, -0.5, 0.5, true);
    Tensor tokens = random_tensor({6, 8}, rng, -1, 1, true);
    const auto mask = build_mask(AxisKind::kTemporal, 2, 3);
    cases.push_back({mode == MaskMode::kAdditive ? "mhsa_additive" : "mhsa_multiplicative",
                     [=] { return mhsa(tokens, p, mask, cfg); },
                     {tokens, p.w_q, p.w_k, p.w_v, p.w_o, p.b_o, p.norm_gain, p.norm_bias}});
  }

  // Miniature model: T=2, N=4, C=8, M=2, 3 classes, every parameter plus the input.
  ModelConfig mc;
  mc.frames = 2;
  mc.joints = 4;
  mc.septcn.mid_channels = 4;
  mc.septcn.out_channels = 8;
  mc.heads = 2;
  mc.n_classes = 3;
  mc.classifier_width = 6;
  mc.dropout = 0.0;
  auto model = std::make_shared<StamModel>(mc);
  for (Tensor p : model->parameter_tensors()) {
    if (p.rank() != 1) continue;
    for (double& v : p.mutable_data()) v += std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
  }
  Tensor input = random_tensor({2, 3, 2, 4}, rng, -1, 1, true);
  auto model_inputs = model->parameter_tensors();
  model_inputs.push_back(input);
  cases.push_back({"miniature_model", [=] { return model->forward(input, false); }, model_inputs});

  double worst = 0.0;
  std::string worst_case;
  std::size_t checked = 0;
  for (const auto& c : cases) {
    const auto r = gradcheck(c.f, c.inputs);
    checked += r.checked;
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_case = c.name + " (" + r.worst + ")";
    }
  }
  const double elapsed = seconds_since(start);
  Verdict v;
  v.pass = worst < 1e-4 && elapsed < 60.0;
  v.detail = std::to_string(cases.size()) + " cases, " + std::to_string(checked) + " entries, max rel error " +
             fmt("%.2e", worst) + " in " + worst_case + ", " + fmt("%.1f", elapsed) + " s";
  return v;
}

Verdict shape_contract() {
  ModelConfig c;
  c.n_classes = 10;
  const StamModel model(c);
  std::mt19937_64 rng(1);
  const auto t = model.trace(random_tensor({8, 3, 4, 21}, rng), false);
  bool ok = t.features.shape() == Shape{8, 128, 4, 21} && t.tokens.shape() == Shape{8, 84, 128} &&
            t.streams.size() == 4 && t.fused.shape() == Shape{8, 336, 128} && t.pooled.shape() == Shape{8, 128} &&
            t.logits.shape() == Shape{8, 10};
  for (const auto& s : t.streams) ok = ok && s.shape() == Shape{8, 84, 128};
  // Per trial, without the batch axis.
  const auto single = model.trace(random_tensor({1, 3, 4, 21}, rng), false);
  ok = ok && single.features.shape() == Shape{1, 128, 4, 21} && single.fused.shape() == Shape{1, 336, 128} &&
       single.logits.shape() == Shape{1, 10};
  return {ok, "features " + to_string(t.features.shape()) + ", tokens " + to_string(t.tokens.shape()) + ", fused " +
                  to_string(t.fused.shape()) + ", pooled " + to_string(t.pooled.shape()) + ", logits " +
                  to_string(t.logits.shape())};
}

Verdict mask_semantics() {
  std::mt19937_64 rng(3);
  AttentionConfig cfg{.channels = 8, .heads = 2, .head_dim = 4};
  std::size_t pairs = 0, violations = 0;
  double worst_sum = 0.0;
  for (std::size_t frames = 1; frames <= 8; ++frames) {
    for (std::size_t joints = 1; joints <= 8; ++joints) {
      const std::size_t l = frames * joints;
      const auto p = init_mhsa(cfg, rng);
      const Tensor x = random_tensor({l, 8}, rng, -3, 3);
      for (AxisKind kind : {AxisKind::kSpatial, AxisKind::kTemporal}) {
        const auto mask = build_mask(kind, frames, joints);
        for (std::size_t head = 0; head < cfg.heads; ++head) {
          const Tensor a = attention_weights(x, p, mask, cfg, head);
          for (std::size_t q = 0; q < l; ++q) {
            double s = 0.0;
            for (std::size_t k = 0; k < l; ++k) {
              // Spatial attention stays within a frame, temporal within a joint.
              const bool crosses = kind == AxisKind::kSpatial ? q / joints != k / joints : q % joints != k % joints;
              ++pairs;
              if (crosses && a.at({q, k}) != 0.0) ++violations;
              if (crosses == mask.allowed(q, k)) ++violations;
              s += a.at({q, k});
            }
            worst_sum = std::max(worst_sum, std::abs(s - 1.0));
          }
        }
      }
    }
  }
  return {violations == 0 && worst_sum <= 1e-12, std::to_string(pairs) + " pairs over T,N in [1,8], " +
                                                     std::to_string(violations) + " violations, max |row sum - 1| " +
                                                     fmt("%.1e", worst_sum)};
}

Verdict position_embedding() {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<std::size_t> pos(0, 200), half(1, 128);
  double worst = 0.0;
  bool exact_zero_ok = true;
  for (int n = 0; n < 100; ++n) {
    const std::size_t p = pos(rng);
    const std::size_t channels = 2 * half(rng);
    const std::size_t index = std::uniform_int_distribution<std::size_t>(0, channels - 1)(rng);
    const double expected = oracle::sinusoid(p, index, channels);
    const double got = sinusoid(p, channels)[index];
    if (expected == 0.0) {
      exact_zero_ok = exact_zero_ok && got == 0.0;
    } else {
      worst = std::max(worst, std::abs(got - expected) / std::abs(expected));
    }
  }
  const double s1 = sinusoid(1, 128)[0];
  const bool sin1 = std::abs(s1 - 0.8414709848078965) <= 1e-15 && std::abs(s1 - oracle::sinusoid(1, 0, 128)) == 0.0;
  return {worst <= 1e-12 && exact_zero_ok && sin1,
          "100 points, max relative deviation " + fmt("%.1e", worst) + ", sin(1) = " + fmt("%.16f", s1)};
}

Verdict parameter_audit() {
  std::mt19937_64 rng(99);
  auto pick = [&](std::initializer_list<std::size_t> options) {
    std::vector<std::size_t> v(options);
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
  };
  std::size_t passed = 0;
  std::string first_failure;
  for (int n = 0; n < 20; ++n) {
    ModelConfig c;
    c.frames = pick({2, 3, 4, 6});
    c.joints = pick({1, 3, 5, 21});
    c.septcn.in_channels = pick({2, 3});
    c.septcn.mid_channels = pick({4, 6, 8});
    c.heads = pick({1, 2, 4});
    c.septcn.out_channels = c.heads * pick({2, 4});
    c.septcn.kernel1 = pick({1, 3});
    c.septcn.kernel2 = pick({3, 5});
    c.septcn.stride2 = pick({1, 2});
    c.classifier_width = pick({3, 8});
    c.n_classes = pick({2, 5, 38});
    c.attention_residual_norm = pick({0, 1}) == 1;
    do {
      for (auto& s : c.streams) s = pick({0, 1}) == 1;
    } while (c.enabled_streams() == 0);
    const StamModel model(c);
    const auto audit = audit_against_runtime(model);
    std::uint64_t closed_form = 0;
    for (const auto& row : count_params(c)) closed_form += row.params;
    if (audit.ok && closed_form == model.count_trainable()) {
      ++passed;
    } else if (first_failure.empty()) {
      first_failure = ", first mismatch " + to_json(c).dump();
    }
  }
  ModelConfig defaults;
  const auto report = count_macs(defaults, 8, 127);
  const auto total = report.total_params();
  const bool in_range = total >= 200000 && total <= 350000;
  bool linear = true;
  for (std::uint64_t batches : {1u, 2u, 127u, 254u, 2733u}) {
    linear = linear && count_macs(defaults, 8, batches).macs_per_pass() == batches * report.macs_per_batch();
  }
  linear = linear && count_macs(defaults, 8, 254).macs_per_pass() == 2 * report.macs_per_pass();
  const double bmac_per_batch = CostReport::bmac(report.macs_per_batch());
  return {passed == 20 && in_range && linear,
          std::to_string(passed) + "/20 configs match, default total " + std::to_string(total) + " (" +
              fmt("%.5f", report.params_millions()) + " M), " + fmt("%.4f", bmac_per_batch) +
              " BMac/batch, linear " + (linear ? "yes" : "no") + first_failure};
}

struct E2eRun {
  ConfigurationResult result;
  double seconds = 0.0;
};

E2eRun run_synthetic_once() {
  SyntheticSpec spec;  // 10 classes x 50 trials, noise 0.01, seed 7
  auto ds = generate_synthetic(spec);
  std::map<std::string, LoadedManifest> manifests;
  manifests.emplace("synthetic.json", LoadedManifest{std::move(ds.manifest), std::move(ds.trials)});
  const ConfigurationSpec intra{"synthetic", {"synthetic.json"}, "synthetic.json", Category::kIntra, {}};
  TrainConfig train;
  train.max_epochs = 200;
  train.patience = 5;
  train.min_delta = 1e-3;
  const auto start = Clock::now();
  E2eRun run{run_configuration(intra, manifests, ModelConfig{}, train), 0.0};
  run.seconds = seconds_since(start);
  return run;
}

bool same_history(const std::vector<EpochRecord>& a, const std::vector<EpochRecord>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].epoch != b[i].epoch || a[i].train_loss != b[i].train_loss || a[i].train_acc != b[i].train_acc ||
        a[i].val_loss != b[i].val_loss || a[i].val_acc != b[i].val_acc) {
      return false;
    }
  }
  return true;
}

Verdict synthetic_end_to_end() {
  const auto first = run_synthetic_once();
  const auto second = run_synthetic_once();
  const auto& r = first.result;
  const bool reproducible =
      same_history(r.training.history, second.result.training.history) && r.model->snapshot() == second.result.model->snapshot();
  const bool ok = r.report.accuracy >= 95.0 && r.training.history.size() <= 200 && first.seconds < 900.0 && reproducible;
  return {ok, "test accuracy " + fmt("%.2f", r.report.accuracy) + "% on " + std::to_string(r.test_size) +
                  " held-out trials, " + std::to_string(r.training.history.size()) + " epochs (best " +
                  std::to_string(r.training.best_epoch) + "), " + fmt("%.1f", first.seconds) + " s, rerun " +
                  (reproducible ? "bit-identical" : "DIFFERS")};
}

Verdict metrics_oracle() {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int n = 0; n < 50; ++n) {
    const std::size_t k = std::uniform_int_distribution<std::size_t>(2, 12)(rng);
    std::vector<std::vector<std::size_t>> confusion(k, std::vector<std::size_t>(k));
    for (auto& row : confusion) {
      for (auto& v : row) v = std::uniform_int_distribution<int>(0, 9)(rng) < 3 ? 0 : rng() % 25;
    }
    const auto r = report_from_confusion(confusion, "oracle");
    const auto o = oracle::score_confusion(confusion);
    auto track = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
    for (std::size_t c = 0; c < k; ++c) {
      track(r.per_class[c].precision, o.per_class[c].precision);
      track(r.per_class[c].recall, o.per_class[c].recall);
      track(r.per_class[c].f1, o.per_class[c].f1);
      track(r.per_class[c].ovr_accuracy, o.per_class[c].ovr_accuracy);
    }
    track(r.accuracy, o.accuracy);
    track(r.macro_precision, o.macro_precision);
    track(r.macro_recall, o.macro_recall);
    track(r.macro_f1, o.macro_f1);
  }
  return {worst <= 1e-12, "50 random matrices, max deviation " + fmt("%.1e", worst)};
}

std::set<std::string> id_set(const std::vector<SkeletonTrial>& trials) {
  std::set<std::string> out;
  for (const auto& t : trials) out.insert(t.trial_id);
  return out;
}

Verdict harness_protocol() {
  std::map<std::string, LoadedManifest> manifests;
  const std::vector<std::string> keys{"a.json", "b.json", "c.json"};
  const std::size_t per_class[] = {10, 7, 4};
  for (std::size_t i = 0; i < 3; ++i) {
    SyntheticSpec s;
    s.n_classes = 3;
    s.trials_per_class = per_class[i];
    s.seed = 100 + i;
    s.name = std::string(1, static_cast<char>('A' + i));
    auto ds = generate_synthetic(s);
    manifests.emplace(keys[i], LoadedManifest{std::move(ds.manifest), std::move(ds.trials)});
  }
  TrainConfig train;
  // Expected ids of one manifest's split, derived from the stratified split directly.
  auto expected = [&](const std::string& key, Split wanted) {
    const auto& m = manifests.at(key);
    const auto split = split_manifest(m.manifest, kTrainTestFraction, train.seed);
    std::set<std::string> out;
    for (const auto& e : split.entries) {
      if (wanted == Split::kUnassigned || e.split == wanted) out.insert(m.manifest.name + "/" + e.trial_id);
    }
    return out;
  };
  auto unite = [](std::set<std::string> a, const std::set<std::string>& b) {
    a.insert(b.begin(), b.end());
    return a;
  };
  std::vector<ConfigurationSpec> specs;
  for (const auto& k : keys) specs.push_back({"intra " + k, {k}, k, Category::kIntra, {}});
  for (const auto& tr : keys) {
    for (const auto& te : keys) {
      if (tr != te) specs.push_back({"inter " + tr + "->" + te, {tr}, te, Category::kInter, {}});
    }
  }
  for (const auto& group : std::vector<std::vector<std::string>>{
           {"a.json", "b.json"}, {"a.json", "c.json"}, {"b.json", "c.json"}, {"a.json", "b.json", "c.json"}}) {
    for (const auto& te : group) specs.push_back({"merge", group, te, Category::kMerge, {}});
  }
  std::size_t ok = 0;
  std::string failed;
  for (const auto& spec : specs) {
    const auto plan = plan_configuration(spec, manifests, train);
    const auto train_ids = unite(id_set(plan.train), id_set(plan.validation));
    const auto test_ids = id_set(plan.test);
    std::set<std::string> want_train, want_test;
    switch (spec.category) {
      case Category::kIntra:
        want_train = expected(spec.test, Split::kTrain);
        want_test = expected(spec.test, Split::kTest);
        break;
      case Category::kInter:
        want_train = expected(spec.train.front(), Split::kUnassigned);
        want_test = expected(spec.test, Split::kUnassigned);
        break;
      case Category::kMerge:
        for (const auto& k : spec.train) want_train = unite(want_train, expected(k, Split::kTrain));
        want_test = expected(spec.test, Split::kTest);
        break;
    }
    bool disjoint = true;
    for (const auto& id : test_ids) disjoint = disjoint && !train_ids.count(id);
    for (const auto& t : plan.validation) disjoint = disjoint && !id_set(plan.train).count(t.trial_id);
    const bool sizes = plan.train.size() + plan.validation.size() == train_ids.size() && plan.test.size() == test_ids.size();
    if (train_ids == want_train && test_ids == want_test && disjoint && sizes) {
      ++ok;
    } else if (failed.empty()) {
      failed = ", first failure: " + spec.name;
    }
  }
  return {ok == specs.size(), std::to_string(ok) + "/" + std::to_string(specs.size()) +
                                  " configurations (3 intra, 6 inter, 9 merge) satisfy the contracts" + failed};
}

Verdict checkpoint_round_trip() {
  ModelConfig c;
  c.n_classes = 10;
  StamModel model(c);
  std::mt19937_64 rng(8);
  for (Tensor p : model.parameter_tensors()) {
    for (double& v : p.mutable_data()) v += std::uniform_real_distribution<double>(-0.02, 0.02)(rng);
  }
  const Tensor batch = random_tensor({8, 3, 4, 21}, rng);
  testing::TempDir dir("acceptance");
  save_checkpoint(dir.path() / "model.ckpt", model);
  const StamModel loaded = load_checkpoint(dir.path() / "model.ckpt");
  const auto before = values(model.forward(batch, false));
  const auto after = values(loaded.forward(batch, false));
  return {before == after, std::to_string(before.size()) + " logits compared bitwise, " +
                               (before == after ? "identical" : "DIFFERENT")};
}

}  // namespace
}  // namespace stam

int main(int argc, char** argv) {
  stam::configure_allocator();
  const std::vector<std::pair<std::string, std::function<stam::Verdict()>>> criteria{
      {"gradients", stam::gradient_fidelity},     {"shapes", stam::shape_contract},
      {"masks", stam::mask_semantics},            {"embedding", stam::position_embedding},
      {"parameters", stam::parameter_audit},      {"end_to_end", stam::synthetic_end_to_end},
      {"metrics", stam::metrics_oracle},          {"harness", stam::harness_protocol},
      {"checkpoint", stam::checkpoint_round_trip}};
  const std::set<std::string> selected(argv + 1, argv + argc);
  int failures = 0;
  for (const auto& [key, run] : criteria) {
    if (!selected.empty() && !selected.count(key)) continue;
    stam::Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::cout << (v.pass ? "PASS " : "FAIL ") << key << ": " << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
