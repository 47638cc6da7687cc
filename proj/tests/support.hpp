// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "stam/ops.hpp"
#include "stam/tensor.hpp"

namespace stam::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

// Values whose magnitude is at least `gap`, so ReLU-like kinks are never
// crossed by a finite-difference step.
inline Tensor away_from_zero(Shape shape, std::mt19937_64& rng, double gap = 0.05, bool requires_grad = true) {
  std::uniform_real_distribution<double> mag(gap, 1.0);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> values(numel(shape));
  for (auto& v : values) v = sign(rng) ? mag(rng) : -mag(rng);
  return Tensor::from(std::move(shape), std::move(values), requires_grad);
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

// Central differences against reverse mode for a scalar probe
// L = sum(f(inputs) * R) with a fixed random R. The relative error
// |analytic - numeric| / max(|analytic|, |numeric|, floor) keeps entries
// that are zero in exact arithmetic from dividing by rounding noise.
inline GradCheckResult gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> inputs, double h = 1e-5,
                                 double floor = 1e-3, std::uint64_t seed = 99) {
  Tensor probe;
  {
    NoGradGuard guard;
    const Tensor out = f();
    std::mt19937_64 rng(seed);
    probe = random_tensor(out.shape(), rng, 0.5, 1.5);
  }
  auto loss_value = [&] {
    NoGradGuard guard;
    return ops::sum(ops::mul(f(), probe)).item();
  };
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    const Tensor loss = ops::sum(ops::mul(f(), probe));
    tape.backward(loss);
  }
  GradCheckResult result;
  for (std::size_t n = 0; n < inputs.size(); ++n) {
    auto& t = inputs[n];
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double up = loss_value();
      data[i] = saved - h;
      const double down = loss_value();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err =
          std::abs(analytic[i] - numeric) / std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = "input " + std::to_string(n) + " element " + std::to_string(i) +
                       ": analytic " + std::to_string(analytic[i]) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return result;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("stam_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace stam::testing
