// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include "stam/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "stam/error.hpp"

namespace stam {
namespace {

thread_local Tape* g_active_tape = nullptr;

detail::TensorImpl& checked(const std::shared_ptr<detail::TensorImpl>& impl) {
  if (!impl) throw ContractError("use of an undefined tensor");
  return *impl;
}

}  // namespace

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

void check_finite(std::span<const double> values, const char* what) {
  // v * 0 is NaN exactly when v is NaN or infinite, and the sum vectorizes.
  double probe = 0.0;
  const double* data = values.data();
  const std::size_t size = values.size();
#pragma omp simd reduction(+ : probe)
  for (std::size_t i = 0; i < size; ++i) probe += data[i] * 0.0;
  if (probe == 0.0) return;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream msg;
      msg << what << ": non-finite value " << values[i] << " at flat index " << i;
      throw DataError(msg.str());
    }
  }
}

Tensor Tensor::wrap(std::shared_ptr<detail::TensorImpl> impl) {
  Tensor t;
  t.impl_ = std::move(impl);
  return t;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  for (auto extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(stam::numel(shape), value);
  impl->shape = std::move(shape);
  check_finite(impl->data, "Tensor::full");
  Tensor t = wrap(std::move(impl));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto extent : shape) {
    if (extent == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
  if (stam::numel(shape) != values.size()) {
    throw DimensionError("shape " + to_string(shape) + " needs " + std::to_string(stam::numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  }
  check_finite(values, "Tensor::from");
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(values);
  Tensor t = wrap(std::move(impl));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return checked(impl_).shape; }

std::size_t Tensor::dim(std::ptrdiff_t axis) const {
  const auto& s = shape();
  const auto r = static_cast<std::ptrdiff_t>(s.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + to_string(s));
  }
  return s[static_cast<std::size_t>(axis)];
}

std::size_t Tensor::numel() const { return checked(impl_).data.size(); }

std::span<const double> Tensor::data() const { return checked(impl_).data; }
std::span<double> Tensor::mutable_data() { return checked(impl_).data; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank mismatch for shape " + to_string(s));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw DimensionError("index out of range for shape " + to_string(s));
    flat = flat * s[axis] + i;
    ++axis;
  }
  return impl_->data[flat];
}

bool Tensor::requires_grad() const { return checked(impl_).requires_grad; }

void Tensor::set_requires_grad(bool on) {
  auto& impl = checked(impl_);
  impl.requires_grad = on;
  if (on) {
    impl.ensure_grad();
  } else {
    impl.grad.clear();
  }
}

bool Tensor::has_grad() const { return checked(impl_).grad.size() == impl_->data.size(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient buffer");
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() {
  checked(impl_).ensure_grad();
  return impl_->grad;
}

void Tensor::zero_grad() {
  auto& impl = checked(impl_);
  if (!impl.grad.empty()) std::fill(impl.grad.begin(), impl.grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto& impl = checked(impl_);
  auto copy = std::make_shared<detail::TensorImpl>();
  copy->shape = impl.shape;
  copy->data = impl.data;
  return wrap(std::move(copy));
}

Tape::Tape() : previous_(g_active_tape) { g_active_tape = this; }

Tape::~Tape() { g_active_tape = previous_; }

Tape* Tape::active() {
  Tape* tape = g_active_tape;
  return (tape && !tape->suspended_) ? tape : nullptr;
}

void Tape::record(std::function<void()> backward_fn) { entries_.push_back(std::move(backward_fn)); }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) throw ContractError("backward() on a loss that was not recorded on a tape");
  auto& impl = *loss.impl();
  impl.ensure_grad();
  impl.grad[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  entries_.clear();
}

NoGradGuard::NoGradGuard() : tape_(g_active_tape) {
  if (tape_) {
    was_suspended_ = tape_->suspended_;
    tape_->suspended_ = true;
  }
}

NoGradGuard::~NoGradGuard() {
  if (tape_) tape_->suspended_ = was_suspended_;
}

}  // namespace stam
