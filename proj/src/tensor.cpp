/* Copyright 2026 The rlsdeconv Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "rlsd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "rlsd/errors.hpp"

namespace rlsd {

namespace {

std::atomic<std::int64_t> g_live_buffers{0};
std::atomic<std::int64_t> g_live_bytes{0};
std::atomic<std::int64_t> g_total_allocations{0};

}  // namespace

namespace detail {

void record_allocation(std::size_t bytes) noexcept {
  g_live_buffers.fetch_add(1, std::memory_order_relaxed);
  g_live_bytes.fetch_add(static_cast<std::int64_t>(bytes), std::memory_order_relaxed);
  g_total_allocations.fetch_add(1, std::memory_order_relaxed);
}

void record_deallocation(std::size_t bytes) noexcept {
  g_live_buffers.fetch_sub(1, std::memory_order_relaxed);
  g_live_bytes.fetch_sub(static_cast<std::int64_t>(bytes), std::memory_order_relaxed);
}

}  // namespace detail

AllocationStats allocation_stats() noexcept {
  return {g_live_buffers.load(std::memory_order_relaxed), g_live_bytes.load(std::memory_order_relaxed),
          g_total_allocations.load(std::memory_order_relaxed)};
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::span<const double> values)
    : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  if (data_.size() != shape_size(shape_)) {
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(*this, other, "tensor add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  require_same_shape(*this, other, "tensor subtract");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) noexcept {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(double s, Tensor a) { return a *= s; }

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  const double* x = a.data();
  const double* y = b.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += x[i] * y[i];
  return acc;
}

double norm2(const Tensor& t) { return std::sqrt(dot(t, t)); }

double sum(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.values()) acc += v;
  return acc;
}

void axpy(double a, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  const double* xs = x.data();
  double* ys = y.data();
  for (std::size_t i = 0; i < x.size(); ++i) ys[i] += a * xs[i];
}

bool all_finite(const Tensor& t) noexcept {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

Tensor as_image(const Tensor& t) {
  if (t.rank() == 3) return t;
  if (t.rank() == 2) return t.reshaped({1, t.dim(0), t.dim(1)});
  throw DimensionError("expected a rank-2 or rank-3 image, got " + shape_string(t.shape()));
}

Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t h, std::size_t w) {
  if (image.rank() != 3 || top + h > image.dim(1) || left + w > image.dim(2)) {
    throw DimensionError("crop window " + std::to_string(h) + "x" + std::to_string(w) + " at (" +
                         std::to_string(top) + "," + std::to_string(left) + ") outside " +
                         shape_string(image.shape()));
  }
  const std::size_t channels = image.dim(0);
  Tensor out = Tensor::image(channels, h, w);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < h; ++i)
      std::copy_n(image.data() + (c * image.dim(1) + top + i) * image.dim(2) + left, w, &out(c, i, 0));
  return out;
}

Tensor center_crop(const Tensor& image, std::size_t h, std::size_t w) {
  if (image.rank() != 3 || h > image.dim(1) || w > image.dim(2)) {
    throw DimensionError("center crop to " + std::to_string(h) + "x" + std::to_string(w) +
                         " larger than " + shape_string(image.shape()));
  }
  return crop(image, (image.dim(1) - h) / 2, (image.dim(2) - w) / 2, h, w);
}

Tensor pad_zero(const Tensor& image, std::size_t pad) {
  if (image.rank() != 3) throw DimensionError("pad_zero expects a rank-3 image");
  const std::size_t channels = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out = Tensor::image(channels, h + 2 * pad, w + 2 * pad);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < h; ++i)
      std::copy_n(image.data() + (c * h + i) * w, w, &out(c, i + pad, pad));
  return out;
}

void correlate_valid_acc(const double* in, std::size_t h, std::size_t w, const double* k,
                         std::size_t kh, std::size_t kw, double* out, double scale) noexcept {
  const std::size_t ho = h - kh + 1, wo = w - kw + 1;
  for (std::size_t i = 0; i < ho; ++i) {
    double* __restrict o = out + i * wo;
    for (std::size_t u = 0; u < kh; ++u) {
      const double* row = in + (i + u) * w;
      for (std::size_t v = 0; v < kw; ++v) {
        const double kv = scale * k[u * kw + v];
        if (kv == 0.0) continue;
        const double* __restrict r = row + v;
        for (std::size_t j = 0; j < wo; ++j) o[j] += kv * r[j];
      }
    }
  }
}

void correlate_valid_adjoint_acc(const double* grad, std::size_t h, std::size_t w, const double* k,
                                 std::size_t kh, std::size_t kw, double* out, double scale) noexcept {
  const std::size_t ho = h - kh + 1, wo = w - kw + 1;
  for (std::size_t i = 0; i < ho; ++i) {
    const double* __restrict g = grad + i * wo;
    for (std::size_t u = 0; u < kh; ++u) {
      double* orow = out + (i + u) * w;
      for (std::size_t v = 0; v < kw; ++v) {
        const double kv = scale * k[u * kw + v];
        if (kv == 0.0) continue;
        double* __restrict o = orow + v;
        for (std::size_t j = 0; j < wo; ++j) o[j] += kv * g[j];
      }
    }
  }
}

void correlate_valid_kernel_grad_acc(const double* in, std::size_t h, std::size_t w,
                                     const double* grad, std::size_t kh, std::size_t kw, double* dk,
                                     double scale) noexcept {
  const std::size_t ho = h - kh + 1, wo = w - kw + 1;
  for (std::size_t u = 0; u < kh; ++u) {
    for (std::size_t v = 0; v < kw; ++v) {
      double acc = 0.0;
      for (std::size_t i = 0; i < ho; ++i) {
        const double* __restrict r = in + (i + u) * w + v;
        const double* __restrict g = grad + i * wo;
        for (std::size_t j = 0; j < wo; ++j) acc += r[j] * g[j];
      }
      dk[u * kw + v] += scale * acc;
    }
  }
}

Tensor conv2d_valid(const Tensor& image, const Tensor& kernel) {
  if (image.rank() != 2 || kernel.rank() != 2) {
    throw DimensionError("conv2d_valid expects rank-2 image and kernel, got " +
                         shape_string(image.shape()) + " and " + shape_string(kernel.shape()));
  }
  const std::size_t h = image.dim(0), w = image.dim(1), kh = kernel.dim(0), kw = kernel.dim(1);
  if (kh == 0 || kw == 0 || kh > h || kw > w) {
    throw DimensionError("kernel " + shape_string(kernel.shape()) + " larger than image " +
                         shape_string(image.shape()));
  }
  Tensor out({h - kh + 1, w - kw + 1});
  correlate_valid_acc(image.data(), h, w, kernel.data(), kh, kw, out.data());
  return out;
}

Tensor conv2d_valid_adjoint(const Tensor& grad, const Tensor& kernel, const Shape& out_shape) {
  if (grad.rank() != 2 || kernel.rank() != 2 || out_shape.size() != 2) {
    throw DimensionError("conv2d_valid_adjoint expects rank-2 operands");
  }
  const std::size_t h = out_shape[0], w = out_shape[1], kh = kernel.dim(0), kw = kernel.dim(1);
  if (kh == 0 || kw == 0 || kh > h || kw > w || grad.dim(0) != h - kh + 1 || grad.dim(1) != w - kw + 1) {
    throw DimensionError("conv2d_valid_adjoint: gradient " + shape_string(grad.shape()) +
                         " inconsistent with kernel " + shape_string(kernel.shape()) + " and image " +
                         shape_string(out_shape));
  }
  Tensor out(out_shape);
  correlate_valid_adjoint_acc(grad.data(), h, w, kernel.data(), kh, kw, out.data());
  return out;
}

double laplacian_response(const Tensor& image) {
  const Tensor img = as_image(image);
  const std::size_t channels = img.dim(0), h = img.dim(1), w = img.dim(2);
  if (h < 3 || w < 3) throw DimensionError("laplacian_response needs at least 3x3, got " + shape_string(image.shape()));
  double acc = 0.0;
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 1; i + 1 < h; ++i)
      for (std::size_t j = 1; j + 1 < w; ++j) {
        const double r = img(c, i - 1, j) + img(c, i + 1, j) + img(c, i, j - 1) + img(c, i, j + 1) -
                         4.0 * img(c, i, j);
        acc += std::abs(r);
      }
  return acc / static_cast<double>(channels * (h - 2) * (w - 2));
}

std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t Rng::next_u64() noexcept {
  ++counter_;
  return mix64(seed_ + counter_ * 0x9E3779B97F4A7C15ULL);
}

double Rng::uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) noexcept {
  const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(next_u64() % span);
}

double Rng::normal() noexcept {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::split(std::uint64_t stream) const noexcept {
  return Rng(mix64(seed_ ^ mix64(stream + 0x632BE59BD9B4E019ULL)));
}

Tensor sample_gaussian(Rng& rng, const Shape& shape) {
  Tensor out(shape);
  for (double& v : out.values()) v = rng.normal();
  return out;
}

}  // namespace rlsd
