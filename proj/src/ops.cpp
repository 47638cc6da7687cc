// Copyright 2026 The STAM Authors
// SPDX-License-Identifier: Apache-2.0

#include "stam/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "stam/error.hpp"
#include "stam/kernels.hpp"

namespace stam::ops {
namespace {

namespace k = stam::kernels::parallel;
using Impl = std::shared_ptr<detail::TensorImpl>;

thread_local std::size_t t_masked_rows = 0;

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->defined() && t->requires_grad(); });
}

Tensor make_output(Shape shape, std::vector<double> data, bool track, const char* op) {
  check_finite(data, op);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = track;
  return Tensor::wrap(std::move(impl));
}

// Grad buffer of `impl` when it participates in differentiation, else null.
double* grad_of(const Impl& impl) {
  if (!impl || !impl->requires_grad) return nullptr;
  impl->ensure_grad();
  return impl->grad.data();
}

void record(std::function<void()> fn) { Tape::active()->record(std::move(fn)); }

std::size_t normalize_axis(std::ptrdiff_t axis, std::size_t rank) {
  const auto r = static_cast<std::ptrdiff_t>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  }
  return static_cast<std::size_t>(axis);
}

std::size_t product(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t p = 1;
  for (std::size_t i = begin; i < end; ++i) p *= s[i];
  return p;
}

// Number of repeats when `b` broadcasts over the leading axes of `a`.
std::size_t suffix_repeats(const Tensor& a, const Tensor& b, const char* op) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (bs.size() <= as.size() && std::equal(bs.begin(), bs.end(), as.end() - static_cast<std::ptrdiff_t>(bs.size()))) {
    return a.numel() / b.numel();
  }
  throw DimensionError(std::string(op) + ": shape " + to_string(bs) + " does not broadcast onto " + to_string(as));
}

}  // namespace

std::size_t masked_row_count() { return t_masked_rows; }
void reset_masked_row_count() { t_masked_rows = 0; }

std::size_t temporal_output_length(std::size_t frames, const TemporalWindow& w) {
  if (w.kernel == 0 || w.stride == 0) throw DimensionError("kernel and stride must be positive");
  if (w.kernel > frames + 2 * w.padding) {
    throw DimensionError("invalid geometry: kernel " + std::to_string(w.kernel) + " exceeds " +
                         std::to_string(frames) + " frames + 2*" + std::to_string(w.padding) + " padding");
  }
  return (frames + 2 * w.padding - w.kernel) / w.stride + 1;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() < 2 || bs.size() < 2) {
    throw DimensionError("matmul needs rank >= 2 operands, got " + to_string(as) + " and " + to_string(bs));
  }
  const std::size_t m = as[as.size() - 2];
  const std::size_t kdim = as.back();
  const std::size_t n = bs.back();
  if (bs[bs.size() - 2] != kdim) {
    throw DimensionError("matmul inner dimensions differ: " + to_string(as) + " x " + to_string(bs));
  }
  const Shape a_batch(as.begin(), as.end() - 2);
  const Shape b_batch(bs.begin(), bs.end() - 2);
  if (!a_batch.empty() && !b_batch.empty() && a_batch != b_batch) {
    throw DimensionError("matmul batch dimensions differ: " + to_string(as) + " x " + to_string(bs));
  }
  const Shape& batch_shape = a_batch.empty() ? b_batch : a_batch;
  const std::size_t batch = numel(batch_shape);
  const bool a_batched = !a_batch.empty();
  const bool b_batched = !b_batch.empty();

  Shape out_shape = batch_shape;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(batch * m * n);
  const auto ad = a.data();
  const auto bd = b.data();

  if (a_batched && !b_batched) {
    // Fold the batch into the row dimension: one large product.
    k::gemm({.m = batch * m, .n = n, .k = kdim}, ad, bd, out);
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      k::gemm({.m = m, .n = n, .k = kdim}, ad.subspan(a_batched ? i * m * kdim : 0, m * kdim),
              bd.subspan(b_batched ? i * kdim * n : 0, kdim * n), std::span(out).subspan(i * m * n, m * n));
    }
  }

  const bool track = tracking({&a, &b});
  Tensor result = make_output(std::move(out_shape), std::move(out), track, "matmul");
  if (track) {
    record([ai = a.impl(), bi = b.impl(), oi = result.impl(), batch, m, n, kdim, a_batched, b_batched] {
      if (oi->grad.empty()) return;
      const std::span<const double> dy = oi->grad;
      if (double* ga = grad_of(ai)) {
        std::span<double> gspan(ga, ai->data.size());
        if (a_batched && !b_batched) {
          k::gemm({.m = batch * m, .n = kdim, .k = n, .trans_b = true, .accumulate = true}, dy, bi->data, gspan);
        } else {
          for (std::size_t i = 0; i < batch; ++i) {
            k::gemm({.m = m, .n = kdim, .k = n, .trans_b = true, .accumulate = true}, dy.subspan(i * m * n, m * n),
                    std::span<const double>(bi->data).subspan(b_batched ? i * kdim * n : 0, kdim * n),
                    gspan.subspan(a_batched ? i * m * kdim : 0, m * kdim));
          }
        }
      }
      if (double* gb = grad_of(bi)) {
        std::span<double> gspan(gb, bi->data.size());
        if (a_batched && !b_batched) {
          k::gemm({.m = kdim, .n = n, .k = batch * m, .trans_a = true, .accumulate = true}, ai->data, dy, gspan);
        } else {
          for (std::size_t i = 0; i < batch; ++i) {
            k::gemm({.m = kdim, .n = n, .k = m, .trans_a = true, .accumulate = true},
                    std::span<const double>(ai->data).subspan(a_batched ? i * m * kdim : 0, m * kdim),
                    dy.subspan(i * m * n, m * n), gspan.subspan(b_batched ? i * kdim * n : 0, kdim * n));
          }
        }
      }
    });
  }
  return result;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const auto& xs = x.shape();
  if (w.rank() != 2 || xs.back() != w.dim(0)) {
    throw DimensionError("linear: input " + to_string(xs) + " incompatible with weight " + to_string(w.shape()));
  }
  const std::size_t in = w.dim(0);
  const std::size_t out_features = w.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out_features)) {
    throw DimensionError("linear: bias " + to_string(bias.shape()) + " does not match " + std::to_string(out_features) +
                         " outputs");
  }
  const std::size_t rows = x.numel() / in;
  std::vector<double> out(rows * out_features);
  k::gemm({.m = rows, .n = out_features, .k = in}, x.data(), w.data(), out);
  if (bias.defined()) {
    const auto bd = bias.data();
    for (std::size_t r = 0; r < rows; ++r) {
      double* row = out.data() + r * out_features;
      for (std::size_t j = 0; j < out_features; ++j) row[j] += bd[j];
    }
  }
  Shape out_shape = xs;
  out_shape.back() = out_features;
  const bool track = tracking({&x, &w, &bias});
  Tensor result = make_output(std::move(out_shape), std::move(out), track, "linear");
  if (track) {
    record([xi = x.impl(), wi = w.impl(), bi = bias.impl(), oi = result.impl(), rows, in, out_features] {
      if (oi->grad.empty()) return;
      const std::span<const double> dy = oi->grad;
      if (double* gx = grad_of(xi)) {
        k::gemm({.m = rows, .n = in, .k = out_features, .trans_b = true, .accumulate = true}, dy, wi->data,
                std::span(gx, rows * in));
      }
      if (double* gw = grad_of(wi)) {
        k::gemm({.m = in, .n = out_features, .k = rows, .trans_a = true, .accumulate = true}, xi->data, dy,
                std::span(gw, in * out_features));
      }
      if (double* gb = grad_of(bi)) {
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < out_features; ++j) gb[j] += dy[r * out_features + j];
        }
      }
    });
  }
  return result;
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const auto& xs = x.shape();
  const std::size_t rank = xs.size();
  std::vector<bool> seen(rank, false);
  if (perm.size() != rank) throw DimensionError("permute: permutation rank mismatch for " + to_string(xs));
  for (auto p : perm) {
    if (p >= rank || seen[p]) throw DimensionError("permute: invalid permutation for " + to_string(xs));
    seen[p] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = xs[perm[i]];

  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * xs[i + 1];
  // Stride in the source for each output axis.
  std::vector<std::size_t> src_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) src_strides[i] = in_strides[perm[i]];

  const std::size_t total = x.numel();
  std::vector<std::size_t> gather(total);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    gather[flat] = src;
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++idx[ax] < out_shape[ax]) {
        src += src_strides[ax];
        break;
      }
      src -= src_strides[ax] * (out_shape[ax] - 1);
      idx[ax] = 0;
    }
  }
  std::vector<double> out(total);
  const auto xd = x.data();
  for (std::size_t i = 0; i < total; ++i) out[i] = xd[gather[i]];

  const bool track = tracking({&x});
  Tensor result = make_output(std::move(out_shape), std::move(out), track, "permute");
  if (track) {
    record([xi = x.impl(), oi = result.impl(), gather = std::move(gather)] {
      if (oi->grad.empty()) return;
      if (double* gx = grad_of(xi)) {
        for (std::size_t i = 0; i < gather.size(); ++i) gx[gather[i]] += oi->grad[i];
      }
    });
  }
  return result;
}

Tensor transpose_last(const Tensor& x) {
  if (x.rank() < 2) throw DimensionError("transpose_last needs rank >= 2, got " + to_string(x.shape()));
  std::vector<std::size_t> perm(x.rank());
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
  return permute(x, perm);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  const bool track = tracking({&x});
  Tensor result = make_output(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), track,
                              "reshape");
  if (track) {
    record([xi = x.impl(), oi = result.impl()] {
      if (oi->grad.empty()) return;
      if (double* gx = grad_of(xi)) {
        for (std::size_t i = 0; i < oi->grad.size(); ++i) gx[i] += oi->grad[i];
      }
    });
  }
  return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t repeats = suffix_repeats(a, b, "add");
  const std::size_t block = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  const auto bd = b.data();
  for (std::size_t r = 0; r < repeats; ++r) {
    double* dst = out.data() + r * block;
    for (std::size_t i = 0; i < block; ++i) dst[i] += bd[i];
  }
  const bool track = tracking({&a, &b});
  Tensor result = make_output(a.shape(), std::move(out), track, "add");
  if (track) {
    record([ai = a.impl(), bi = b.impl(), oi = result.impl(), repeats, block] {
      if (oi->grad.empty()) return;
      const auto& dy = oi->grad;
      if (double* ga = grad_of(ai)) {
        for (std::size_t i = 0; i < dy.size(); ++i) ga[i] += dy[i];
      }
      if (double* gb = grad_of(bi)) {
        for (std::size_t r = 0; r < repeats; ++r) {
          for (std::size_t i = 0; i < block; ++i) gb[i] += dy[r * block + i];
        }
      }
    });
  }
  return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const std::size_t repeats = suffix_repeats(a, b, "mul");
  const std::size_t block = b.numel();
  std::vector<double> out(a.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t r = 0; r < repeats; ++r) {
    for (std::size_t i = 0; i < block; ++i) out[r * block + i] = ad[r * block + i] * bd[i];
  }
  const bool track = tracking({&a, &b});
  Tensor result = make_output(a.shape(), std::move(out), track, "mul");
  if (track) {
    record([ai = a.impl(), bi = b.impl(), oi = result.impl(), repeats, block] {
      if (oi->grad.empty()) return;
      const auto& dy = oi->grad;
      // Read both operands before writing: a and b may alias.
      if (double* ga = grad_of(ai)) {
        for (std::size_t r = 0; r < repeats; ++r) {
          for (std::size_t i = 0; i < block; ++i) ga[r * block + i] += dy[r * block + i] * bi->data[i];
        }
      }
      if (double* gb = grad_of(bi)) {
        for (std::size_t r = 0; r < repeats; ++r) {
          for (std::size_t i = 0; i < block; ++i) gb[i] += dy[r * block + i] * ai->data[r * block + i];
        }
      }
    });
  }
  return result;
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) v *= factor;
  const bool track = tracking({&x});
  Tensor result = make_output(x.shape(), std::move(out), track, "scale");
  if (track) {
    record([xi = x.impl(), oi = result.impl(), factor] {
      if (oi->grad.empty()) return;
      if (double* gx = grad_of(xi)) {
        for (std::size_t i = 0; i < oi->grad.size(); ++i) gx[i] += factor * oi->grad[i];
      }
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const bool track = tracking({&x});
  Tensor result = make_output({1}, {total}, track, "sum");
  if (track) {
    record([xi = x.impl(), oi = result.impl()] {
      if (oi->grad.empty()) return;
      if (double* gx = grad_of(xi)) {
        for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += oi->grad[0];
      }
    });
  }
  return result;
}

Tensor mean(const Tensor& x, std::ptrdiff_t axis_in) {
  const auto& xs = x.shape();
  const std::size_t axis = normalize_axis(axis_in, xs.size());
  const std::size_t outer = product(xs, 0, axis);
  const std::size_t len = xs[axis];
  const std::size_t inner = product(xs, axis + 1, xs.size());
  std::vector<double> out(outer * inner, 0.0);
  const auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t a = 0; a < len; ++a) {
      const double* src = xd.data() + (o * len + a) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(len);
  for (auto& v : out) v *= inv;
  Shape out_shape;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i != axis) out_shape.push_back(xs[i]);
  }
  if (out_shape.empty()) out_shape.push_back(1);
  const bool track = tracking({&x});
  Tensor result = make_output(std::move(out_shape), std::move(out), track, "mean");
  if (track) {
    record([xi = x.impl(), oi = result.impl(), outer, len, inner, inv] {
      if (oi->grad.empty()) return;
      if (double* gx = grad_of(xi)) {
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t a = 0; a < len; ++a) {
            for (std::size_t i = 0; i < inner; ++i) gx[(o * len + a) * inner + i] += oi->grad[o * inner + i] * inv;
          }
        }
      }
    });
  }
  return result;
}

Tensor leaky_relu(const Tensor& x, double negative_slope) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (auto& v : out) {
    if (v < 0.0) v *= negative_slope;
  }
  const bool track = tracking({&x});
  Tensor result = make_output(x.shape(), std::move(out), track, "leaky_relu");
  if (track) {
    record([xi = x.impl(), oi = result.impl(), negative_slope] {
      if (oi->grad.empty()) return;
      if (double* gx = grad_of(xi)) {
        for (std::size_t i = 0; i < oi->grad.size(); ++i) {
          gx[i] += xi->data[i] > 0.0 ? oi->grad[i] : negative_slope * oi->grad[i];
        }
      }
    });
  }
  return result;
}

Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0); }

Tensor dropout(const Tensor& x, double rate, bool training, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<double> factors(x.numel());
  for (auto& f : factors) f = keep(rng) ? keep_scale : 0.0;
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * factors[i];
  const bool track = tracking({&x});
  Tensor result = make_output(x.shape(), std::move(out), track, "dropout");
  if (track) {
    record([xi = x.impl(), oi = result.impl(), factors = std::move(factors)] {
      if (oi->grad.empty()) return;
      if (double* gx = grad_of(xi)) {
        for (std::size_t i = 0; i < factors.size(); ++i) gx[i] += oi->grad[i] * factors[i];
      }
    });
  }
  return result;
}

Tensor concat(std::span<const Tensor> parts, std::ptrdiff_t axis_in) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const Shape& first = parts.front().shape();
  const std::size_t axis = normalize_axis(axis_in, first.size());
  std::size_t total_len = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat: " + to_string(s) + " disagrees with " + to_string(first) + " off axis " +
                           std::to_string(axis));
    }
    total_len += s[axis];
  }
  const std::size_t outer = product(first, 0, axis);
  const std::size_t inner = product(first, axis + 1, first.size());
  Shape out_shape = first;
  out_shape[axis] = total_len;
  std::vector<double> out(outer * total_len * inner);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t len = p.dim(static_cast<std::ptrdiff_t>(axis));
    const auto pd = p.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pd.data() + o * len * inner, len * inner, out.data() + (o * total_len + offset) * inner);
    }
    offsets.push_back(offset);
    offset += len;
  }
  bool track = false;
  if (Tape::active()) {
    track = std::any_of(parts.begin(), parts.end(), [](const Tensor& t) { return t.requires_grad(); });
  }
  Tensor result = make_output(std::move(out_shape), std::move(out), track, "concat");
  if (track) {
    std::vector<Impl> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    record([impls = std::move(impls), offsets = std::move(offsets), oi = result.impl(), outer, inner, total_len,
            axis] {
      if (oi->grad.empty()) return;
      for (std::size_t pi = 0; pi < impls.size(); ++pi) {
        double* g = grad_of(impls[pi]);
        if (!g) continue;
        const std::size_t len = impls[pi]->shape[axis];
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = oi->grad.data() + (o * total_len + offsets[pi]) * inner;
          double* dst = g + o * len * inner;
          for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return result;
}

Tensor softmax(const Tensor& x, std::ptrdiff_t axis_in) {
  const auto& xs = x.shape();
  const std::size_t axis = normalize_axis(axis_in, xs.size());
  const std::size_t outer = product(xs, 0, axis);
  const std::size_t len = xs[axis];
  const std::size_t inner = product(xs, axis + 1, xs.size());
  std::vector<double> out(x.numel());
  if (inner == 1) {
    t_masked_rows += k::softmax_rows(outer, len, x.data(), out, kMaskedThreshold);
  } else {
    // Gather strided lanes into rows, reuse the row kernel, scatter back.
    std::vector<double> rows(x.numel());
    const auto xd = x.data();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t a = 0; a < len; ++a) {
        for (std::size_t i = 0; i < inner; ++i) rows[(o * inner + i) * len + a] = xd[(o * len + a) * inner + i];
      }
    }
    std::vector<double> soft(rows.size());
    t_masked_rows += k::softmax_rows(outer * inner, len, rows, soft, kMaskedThreshold);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t a = 0; a < len; ++a) {
        for (std::size_t i = 0; i < inner; ++i) out[(o * len + a) * inner + i] = soft[(o * inner + i) * len + a];
      }
    }
  }
  const bool track = tracking({&x});
  Tensor result = make_output(xs, std::move(out), track, "softmax");
  if (track) {
    record([xi = x.impl(), oi = result.impl(), outer, len, inner] {
      if (oi->grad.empty()) return;
      double* gx = grad_of(xi);
      if (!gx) return;
      const auto& y = oi->data;
      const auto& dy = oi->grad;
      for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < inner; ++i) {
          double dot = 0.0;
          for (std::size_t a = 0; a < len; ++a) {
            const std::size_t idx = (o * len + a) * inner + i;
            dot += dy[idx] * y[idx];
          }
          for (std::size_t a = 0; a < len; ++a) {
            const std::size_t idx = (o * len + a) * inner + i;
            gx[idx] += y[idx] * (dy[idx] - dot);
          }
        }
      }
    });
  }
  return result;
}

Tensor scaled_softmax(const Tensor& x, double scale, const Tensor& bias) {
  if (x.rank() == 0) throw DimensionError("scaled_softmax needs at least one axis");
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.numel() / len;
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  if (bias.defined()) {
    const std::size_t period = bias.numel();
    if (suffix_repeats(x, bias, "scaled_softmax") == 0 || period % len != 0) {
      throw DimensionError("scaled_softmax: bias must cover whole rows");
    }
    const auto bd = bias.data();
    for (std::size_t base = 0; base < out.size(); base += period) {
      for (std::size_t i = 0; i < period; ++i) out[base + i] = scale * xd[base + i] + bd[i];
    }
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = scale * xd[i];
  }
  t_masked_rows += k::softmax_rows(rows, len, out, out, kMaskedThreshold);
  const bool track = tracking({&x});
  Tensor result = make_output(x.shape(), std::move(out), track, "scaled_softmax");
  if (track) {
    record([xi = x.impl(), oi = result.impl(), rows, len, scale] {
      if (oi->grad.empty()) return;
      double* gx = grad_of(xi);
      if (!gx) return;
      const double* y = oi->data.data();
      const double* dy = oi->grad.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t off = r * len;
        double dot = 0.0;
        for (std::size_t a = 0; a < len; ++a) dot += dy[off + a] * y[off + a];
        for (std::size_t a = 0; a < len; ++a) gx[off + a] += scale * y[off + a] * (dy[off + a] - dot);
      }
    });
  }
  return result;
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps, std::ptrdiff_t axis) {
  if (normalize_axis(axis, x.rank()) != x.rank() - 1) throw ContractError("layernorm normalises the last axis only");
  if (!(eps > 0.0)) throw ParameterError("layernorm eps must be positive");
  const std::size_t cols = x.shape().back();
  if (gain.numel() != cols || bias.numel() != cols) {
    throw DimensionError("layernorm: gain/bias must have " + std::to_string(cols) + " entries");
  }
  const std::size_t rows = x.numel() / cols;
  std::vector<double> out(x.numel());
  std::vector<double> mu(rows);
  std::vector<double> rstd(rows);
  k::layernorm_rows(rows, cols, x.data(), gain.data(), bias.data(), eps, out, mu, rstd);
  const bool track = tracking({&x, &gain, &bias});
  Tensor result = make_output(x.shape(), std::move(out), track, "layernorm");
  if (track) {
    record([xi = x.impl(), gi = gain.impl(), bi = bias.impl(), oi = result.impl(), rows, cols, mu = std::move(mu),
            rstd = std::move(rstd)] {
      if (oi->grad.empty()) return;
      double* gx = grad_of(xi);
      double* gg = grad_of(gi);
      double* gb = grad_of(bi);
      const auto& dy = oi->grad;
      const auto& xd = xi->data;
      const auto& gd = gi->data;
      std::vector<double> xhat(cols);
      std::vector<double> dxhat(cols);
      const double inv_cols = 1.0 / static_cast<double>(cols);
      for (std::size_t r = 0; r < rows; ++r) {
        double mean_d = 0.0;
        double mean_dx = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
          const std::size_t idx = r * cols + j;
          xhat[j] = (xd[idx] - mu[r]) * rstd[r];
          dxhat[j] = dy[idx] * gd[j];
          mean_d += dxhat[j];
          mean_dx += dxhat[j] * xhat[j];
          if (gg) gg[j] += dy[idx] * xhat[j];
          if (gb) gb[j] += dy[idx];
        }
        mean_d *= inv_cols;
        mean_dx *= inv_cols;
        if (gx) {
          for (std::size_t j = 0; j < cols; ++j) gx[r * cols + j] += rstd[r] * (dxhat[j] - mean_d - xhat[j] * mean_dx);
        }
      }
    });
  }
  return result;
}

Tensor conv_temporal(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
                     std::size_t padding, std::size_t groups) {
  const auto& xs = x.shape();
  if (xs.size() != 3 && xs.size() != 4) throw DimensionError("conv_temporal expects [C,T,N] or [B,C,T,N], got " + to_string(xs));
  const bool batched = xs.size() == 4;
  const std::size_t batch = batched ? xs[0] : 1;
  const std::size_t in_ch = xs[xs.size() - 3];
  const std::size_t frames = xs[xs.size() - 2];
  const std::size_t joints = xs.back();
  if (weight.rank() != 3) throw DimensionError("conv_temporal weight must be [C_out, C_in/groups, k]");
  const std::size_t out_ch = weight.dim(0);
  const std::size_t kernel = weight.dim(2);
  if (groups == 0 || in_ch % groups != 0 || out_ch % groups != 0 || weight.dim(1) != in_ch / groups) {
    throw DimensionError("conv_temporal: weight " + to_string(weight.shape()) + " incompatible with input " +
                         to_string(xs) + " and groups=" + std::to_string(groups));
  }
  if (bias.defined() && bias.numel() != out_ch) throw DimensionError("conv_temporal: bias size mismatch");
  const std::size_t out_frames = temporal_output_length(frames, {kernel, stride, padding});
  const kernels::ConvGeometry geom{.in_channels = in_ch,
                                   .out_channels = out_ch,
                                   .frames = frames,
                                   .joints = joints,
                                   .kernel = kernel,
                                   .stride = stride,
                                   .padding = padding,
                                   .groups = groups};
  const std::size_t in_size = in_ch * frames * joints;
  const std::size_t out_size = out_ch * out_frames * joints;
  std::vector<double> out(batch * out_size);
  const std::span<const double> bias_span = bias.defined() ? bias.data() : std::span<const double>{};
  for (std::size_t b = 0; b < batch; ++b) {
    k::conv_temporal(geom, x.data().subspan(b * in_size, in_size), weight.data(), bias_span,
                     std::span(out).subspan(b * out_size, out_size));
  }
  Shape out_shape = xs;
  out_shape[xs.size() - 3] = out_ch;
  out_shape[xs.size() - 2] = out_frames;
  const bool track = tracking({&x, &weight, &bias});
  Tensor result = make_output(std::move(out_shape), std::move(out), track, "conv_temporal");
  if (track) {
    record([xi = x.impl(), wi = weight.impl(), bi = bias.impl(), oi = result.impl(), geom, batch, in_size, out_size,
            out_frames] {
      if (oi->grad.empty()) return;
      double* gx = grad_of(xi);
      double* gw = grad_of(wi);
      double* gb = grad_of(bi);
      const std::size_t in_per_group = geom.in_channels / geom.groups;
      const std::size_t out_per_group = geom.out_channels / geom.groups;
      const std::size_t plane = out_frames * geom.joints;
      const bool pointwise = geom.groups == 1 && geom.kernel == 1 && geom.stride == 1 && geom.padding == 0;
      for (std::size_t b = 0; b < batch; ++b) {
        const std::span<const double> dy = std::span<const double>(oi->grad).subspan(b * out_size, out_size);
        const std::span<const double> xb = std::span<const double>(xi->data).subspan(b * in_size, in_size);
        if (gb) {
          for (std::size_t co = 0; co < geom.out_channels; ++co) {
            for (std::size_t q = 0; q < plane; ++q) gb[co] += dy[co * plane + q];
          }
        }
        if (pointwise) {
          if (gw) {
            k::gemm({.m = geom.out_channels, .n = geom.in_channels, .k = plane, .trans_b = true, .accumulate = true},
                    dy, xb, std::span(gw, geom.out_channels * geom.in_channels));
          }
          if (gx) {
            k::gemm({.m = geom.in_channels, .n = plane, .k = geom.out_channels, .trans_a = true, .accumulate = true},
                    wi->data, dy, std::span(gx + b * in_size, in_size));
          }
          continue;
        }
        for (std::size_t co = 0; co < geom.out_channels; ++co) {
          const std::size_t group = co / out_per_group;
          for (std::size_t ci = 0; ci < in_per_group; ++ci) {
            const std::size_t channel = group * in_per_group + ci;
            for (std::size_t j = 0; j < geom.kernel; ++j) {
              const std::size_t widx = (co * in_per_group + ci) * geom.kernel + j;
              const double tap = wi->data[widx];
              double acc = 0.0;
              for (std::size_t t = 0; t < out_frames; ++t) {
                const auto src = static_cast<std::ptrdiff_t>(t * geom.stride + j) -
                                 static_cast<std::ptrdiff_t>(geom.padding);
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(geom.frames)) continue;
                const double* dy_row = dy.data() + (co * out_frames + t) * geom.joints;
                const std::size_t x_off = (channel * geom.frames + static_cast<std::size_t>(src)) * geom.joints;
                for (std::size_t n = 0; n < geom.joints; ++n) {
                  acc += dy_row[n] * xb[x_off + n];
                  if (gx) gx[b * in_size + x_off + n] += tap * dy_row[n];
                }
              }
              if (gw) gw[widx] += acc;
            }
          }
        }
      }
    });
  }
  return result;
}

Tensor maxpool_temporal(const Tensor& x, const TemporalWindow& window) {
  const auto& xs = x.shape();
  if (xs.size() < 2) throw DimensionError("maxpool_temporal expects [..., T, N], got " + to_string(xs));
  const std::size_t frames = xs[xs.size() - 2];
  const std::size_t joints = xs.back();
  const std::size_t outer = x.numel() / (frames * joints);
  const std::size_t out_frames = temporal_output_length(frames, window);
  for (std::size_t t = 0; t < out_frames; ++t) {
    const auto start = static_cast<std::ptrdiff_t>(t * window.stride) - static_cast<std::ptrdiff_t>(window.padding);
    const auto stop = start + static_cast<std::ptrdiff_t>(window.kernel);
    if (stop <= 0 || start >= static_cast<std::ptrdiff_t>(frames)) {
      throw DimensionError("invalid geometry: pooling window " + std::to_string(t) + " covers only padding");
    }
  }
  std::vector<double> out(outer * out_frames * joints);
  std::vector<std::size_t> argmax(out.size());
  const auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t t = 0; t < out_frames; ++t) {
      const auto start = static_cast<std::ptrdiff_t>(t * window.stride) - static_cast<std::ptrdiff_t>(window.padding);
      const std::size_t lo = static_cast<std::size_t>(std::max<std::ptrdiff_t>(start, 0));
      const std::size_t hi = std::min(static_cast<std::size_t>(start + static_cast<std::ptrdiff_t>(window.kernel)), frames);
      for (std::size_t n = 0; n < joints; ++n) {
        std::size_t best = (o * frames + lo) * joints + n;
        for (std::size_t f = lo + 1; f < hi; ++f) {
          const std::size_t idx = (o * frames + f) * joints + n;
          if (xd[idx] > xd[best]) best = idx;
        }
        const std::size_t oidx = (o * out_frames + t) * joints + n;
        out[oidx] = xd[best];
        argmax[oidx] = best;
      }
    }
  }
  Shape out_shape = xs;
  out_shape[xs.size() - 2] = out_frames;
  const bool track = tracking({&x});
  Tensor result = make_output(std::move(out_shape), std::move(out), track, "maxpool_temporal");
  if (track) {
    record([xi = x.impl(), oi = result.impl(), argmax = std::move(argmax)] {
      if (oi->grad.empty()) return;
      if (double* gx = grad_of(xi)) {
        for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += oi->grad[i];
      }
    });
  }
  return result;
}

Tensor subsample_temporal(const Tensor& x, std::size_t stride) {
  const auto& xs = x.shape();
  if (xs.size() < 2) throw DimensionError("subsample_temporal expects [..., T, N], got " + to_string(xs));
  if (stride == 0) throw DimensionError("subsample stride must be positive");
  if (stride == 1) return x;
  const std::size_t frames = xs[xs.size() - 2];
  const std::size_t joints = xs.back();
  const std::size_t outer = x.numel() / (frames * joints);
  const std::size_t out_frames = (frames - 1) / stride + 1;
  std::vector<double> out(outer * out_frames * joints);
  const auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t t = 0; t < out_frames; ++t) {
      std::copy_n(xd.data() + (o * frames + t * stride) * joints, joints,
                  out.data() + (o * out_frames + t) * joints);
    }
  }
  Shape out_shape = xs;
  out_shape[xs.size() - 2] = out_frames;
  const bool track = tracking({&x});
  Tensor result = make_output(std::move(out_shape), std::move(out), track, "subsample_temporal");
  if (track) {
    record([xi = x.impl(), oi = result.impl(), outer, frames, joints, out_frames, stride] {
      if (oi->grad.empty()) return;
      if (double* gx = grad_of(xi)) {
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t t = 0; t < out_frames; ++t) {
            for (std::size_t n = 0; n < joints; ++n) {
              gx[(o * frames + t * stride) * joints + n] += oi->grad[(o * out_frames + t) * joints + n];
            }
          }
        }
      }
    });
  }
  return result;
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy expects logits [B, classes], got " + to_string(logits.shape()));
  const std::size_t batch = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  if (labels.size() != batch) throw ContractError("cross_entropy: label count differs from batch size");
  for (auto label : labels) {
    if (label >= classes) {
      throw DataError("label " + std::to_string(label) + " out of range for " + std::to_string(classes) + " classes");
    }
  }
  std::vector<double> probs(logits.numel());
  k::softmax_rows(batch, classes, logits.data(), probs, -std::numeric_limits<double>::infinity());
  const auto ld = logits.data();
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = ld.data() + b * classes;
    const double peak = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t c = 0; c < classes; ++c) z += std::exp(row[c] - peak);
    total += std::log(z) + peak - row[labels[b]];
  }
  const bool track = tracking({&logits});
  Tensor result = make_output({1}, {total / static_cast<double>(batch)}, track, "cross_entropy");
  if (track) {
    std::vector<std::size_t> owned(labels.begin(), labels.end());
    record([li = logits.impl(), oi = result.impl(), probs = std::move(probs), owned = std::move(owned), batch,
            classes] {
      if (oi->grad.empty()) return;
      if (double* gl = grad_of(li)) {
        const double g = oi->grad[0] / static_cast<double>(batch);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < classes; ++c) {
            const double target = c == owned[b] ? 1.0 : 0.0;
            gl[b * classes + c] += g * (probs[b * classes + c] - target);
          }
        }
      }
    });
  }
  return result;
}

}  // namespace stam::ops
