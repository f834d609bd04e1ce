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

#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace rlsd {

// Live-buffer accounting for every Tensor allocation. Used to check that the
// state retained by an implicit layer does not grow with solver iterations.
struct AllocationStats {
  std::int64_t live_buffers = 0;
  std::int64_t live_bytes = 0;
  std::int64_t total_allocations = 0;
};

AllocationStats allocation_stats() noexcept;

namespace detail {
void record_allocation(std::size_t bytes) noexcept;
void record_deallocation(std::size_t bytes) noexcept;
}  // namespace detail

template <class T>
struct CountingAllocator {
  using value_type = T;

  CountingAllocator() noexcept = default;
  template <class U>
  CountingAllocator(const CountingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    if (n > std::numeric_limits<std::size_t>::max() / sizeof(T)) throw std::bad_array_new_length();
    detail::record_allocation(n * sizeof(T));
    return static_cast<T*>(::operator new(n * sizeof(T)));
  }
  void deallocate(T* p, std::size_t n) noexcept {
    detail::record_deallocation(n * sizeof(T));
    ::operator delete(p);
  }

  template <class U>
  bool operator==(const CountingAllocator<U>&) const noexcept { return true; }
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Dense row-major tensor of doubles. Images are rank 3 (channels x height x
// width), kernels rank 2, filter banks rank 4 (out x in x kh x kw).
class Tensor {
 public:
  using Buffer = std::vector<double, CountingAllocator<double>>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::span<const double> values);

  static Tensor image(std::size_t channels, std::size_t height, std::size_t width) {
    return Tensor({channels, height, width});
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> values() noexcept { return {data_.data(), data_.size()}; }
  std::span<const double> values() const noexcept { return {data_.data(), data_.size()}; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double& operator()(std::size_t i, std::size_t j) noexcept { return data_[i * shape_[1] + j]; }
  double operator()(std::size_t i, std::size_t j) const noexcept { return data_[i * shape_[1] + j]; }
  double& operator()(std::size_t c, std::size_t i, std::size_t j) noexcept {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  double operator()(std::size_t c, std::size_t i, std::size_t j) const noexcept {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }

  // Same data under a new shape with the same element count.
  Tensor reshaped(Shape shape) const;

  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s) noexcept;

 private:
  Shape shape_;
  Buffer data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double s, Tensor a);

Tensor zeros_like(const Tensor& t);
double dot(const Tensor& a, const Tensor& b);
double norm2(const Tensor& t);
double sum(const Tensor& t);
// y += a * x
void axpy(double a, const Tensor& x, Tensor& y);
bool all_finite(const Tensor& t) noexcept;

// Throws DimensionError naming `what` if the shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

// Views a rank-2 tensor as a single-channel image; rank-3 passes through.
Tensor as_image(const Tensor& t);

// Rank-3 crop [top, top+h) x [left, left+w) on every channel.
Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t h, std::size_t w);
// Centered crop of a rank-3 image down to h x w.
Tensor center_crop(const Tensor& image, std::size_t h, std::size_t w);
// Zero padding of a rank-3 image by `pad` pixels on every side.
Tensor pad_zero(const Tensor& image, std::size_t pad);

// Plane kernels. All operate on contiguous row-major planes and accumulate
// into the output. The kernel is applied without flipping (correlation):
//   out[i,j] += scale * sum_{u,v} k[u,v] * in[i+u, j+v]
void correlate_valid_acc(const double* in, std::size_t h, std::size_t w, const double* k,
                         std::size_t kh, std::size_t kw, double* out, double scale = 1.0) noexcept;
// Exact adjoint of correlate_valid_acc: scatters an (h-kh+1)x(w-kw+1) plane
// into an h x w plane (zero-padded full convolution).
void correlate_valid_adjoint_acc(const double* grad, std::size_t h, std::size_t w, const double* k,
                                 std::size_t kh, std::size_t kw, double* out,
                                 double scale = 1.0) noexcept;
// dk[u,v] += scale * sum_{i,j} grad[i,j] * in[i+u, j+v]
void correlate_valid_kernel_grad_acc(const double* in, std::size_t h, std::size_t w,
                                     const double* grad, std::size_t kh, std::size_t kw, double* dk,
                                     double scale = 1.0) noexcept;

// Valid 2-D convolution of a rank-2 image with a rank-2 kernel. Kernels are
// kept pre-flipped (see load_kernel), so this evaluates
//   out[i,j] = sum_{u,v} kernel[u,v] * image[i+u, j+v].
Tensor conv2d_valid(const Tensor& image, const Tensor& kernel);
// Adjoint of conv2d_valid onto an image of shape `out_shape` (rank 2).
Tensor conv2d_valid_adjoint(const Tensor& grad, const Tensor& kernel, const Shape& out_shape);

// Mean absolute response of the valid 3x3 Laplacian, averaged over channels.
double laplacian_response(const Tensor& image);

// Counter-based splitmix64 stream. The same seed produces the same stream on
// every platform; normals come from Box-Muller, not std::normal_distribution.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }
  void set_counter(std::uint64_t c) noexcept { counter_ = c; }

  std::uint64_t next_u64() noexcept;
  // Uniform on [0, 1).
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  // Uniform integer on [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) noexcept;
  double normal() noexcept;

  // Independent child stream for worker `stream`.
  Rng split(std::uint64_t stream) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t z) noexcept;

// I.i.d. standard normal entries; callers scale by sigma.
Tensor sample_gaussian(Rng& rng, const Shape& shape);

}  // namespace rlsd
