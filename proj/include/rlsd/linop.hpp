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

#include <filesystem>
#include <functional>
#include <string>

#include "rlsd/tensor.hpp"

namespace rlsd {

// Matrix-free linear operator bound to fixed input and output shapes.
// Implementations must satisfy <apply(x), y> == <x, adjoint(y)>.
class LinearMap {
 public:
  virtual ~LinearMap() = default;

  virtual Shape input_shape() const = 0;
  virtual Shape output_shape() const = 0;
  virtual Tensor apply(const Tensor& x) const = 0;
  virtual Tensor adjoint(const Tensor& y) const = 0;
};

// LinearMap from a pair of callables. Mostly useful for tests and for
// exposing user operators through the C API.
class CallbackMap final : public LinearMap {
 public:
  using Fn = std::function<Tensor(const Tensor&)>;

  CallbackMap(Shape in, Shape out, Fn apply, Fn adjoint)
      : in_(std::move(in)), out_(std::move(out)), apply_(std::move(apply)), adjoint_(std::move(adjoint)) {}

  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return out_; }
  Tensor apply(const Tensor& x) const override { return apply_(x); }
  Tensor adjoint(const Tensor& y) const override { return adjoint_(y); }

 private:
  Shape in_, out_;
  Fn apply_, adjoint_;
};

// Nonnegative 2-D point spread function normalized to unit sum.
//
// Flip convention: `taps` is stored rotated by 180 degrees relative to the
// PSF, so that the blur is evaluated as a correlation with `taps`. Kernel
// files hold the PSF in its natural orientation; from_psf/to_psf convert.
class BlurKernel {
 public:
  BlurKernel() = default;

  // Flips and normalizes a PSF. Sums already within rounding of 1 are kept
  // untouched so that save/load round-trips are bit-exact.
  static BlurKernel from_psf(const Tensor& psf);
  // Wraps already-flipped, already-normalized taps (validated).
  static BlurKernel from_taps(Tensor taps);
  // Odd-sized centered delta; blurring with it is a centered crop.
  static BlurKernel delta(std::size_t size);

  const Tensor& taps() const noexcept { return taps_; }
  Tensor to_psf() const;
  std::size_t height() const { return taps_.dim(0); }
  std::size_t width() const { return taps_.dim(1); }
  // Factor applied to the raw file values during normalization.
  double applied_scale() const noexcept { return scale_; }

 private:
  Tensor taps_;
  double scale_ = 1.0;
};

BlurKernel load_kernel(const std::filesystem::path& path);
void save_kernel(const std::filesystem::path& path, const BlurKernel& kernel);

// H: channel-wise valid blur with a shared kernel, C x H x W -> C x (H-kh+1) x (W-kw+1).
class BlurOperator final : public LinearMap {
 public:
  BlurOperator(BlurKernel kernel, Shape input_shape);

  // Operator recovering an image of latent shape from a blurred observation.
  static BlurOperator for_observation(BlurKernel kernel, const Shape& observation_shape);

  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return out_; }
  Tensor apply(const Tensor& x) const override;
  Tensor adjoint(const Tensor& y) const override;

  const BlurKernel& kernel() const noexcept { return kernel_; }

 private:
  BlurKernel kernel_;
  Shape in_, out_;
};

// G: valid multi-channel filter bank with F x C x kh x kw filters, mapping
// C x H x W -> F x (H-kh+1) x (W-kw+1). F may be zero (empty bank).
class FilterBank final : public LinearMap {
 public:
  FilterBank(Tensor filters, Shape input_shape);

  Shape input_shape() const override { return in_; }
  Shape output_shape() const override { return out_; }
  Tensor apply(const Tensor& x) const override;
  Tensor adjoint(const Tensor& z) const override;

  // d/dfilters of <apply(x), cotangent>.
  Tensor filter_grad(const Tensor& x, const Tensor& cotangent) const;

  const Tensor& filters() const noexcept { return filters_; }
  std::size_t features() const { return filters_.dim(0); }

 private:
  Tensor filters_;
  Shape in_, out_;
};

// Elementwise nonnegative weighting of filter responses (self-adjoint).
class DiagonalWeights final : public LinearMap {
 public:
  explicit DiagonalWeights(Tensor weights);

  Shape input_shape() const override { return weights_.shape(); }
  Shape output_shape() const override { return weights_.shape(); }
  Tensor apply(const Tensor& z) const override;
  Tensor adjoint(const Tensor& z) const override { return apply(z); }

  const Tensor& weights() const noexcept { return weights_; }

 private:
  Tensor weights_;
};

// S = (1/sigma2) H^T H + G^T W G + alpha I. Holds non-owning references;
// the referenced operators must outlive it.
class SystemOperator final : public LinearMap {
 public:
  SystemOperator(const BlurOperator& blur, const FilterBank& reg, const DiagonalWeights& weights,
                 double sigma2, double alpha);

  Shape input_shape() const override { return blur_.input_shape(); }
  Shape output_shape() const override { return blur_.input_shape(); }
  Tensor apply(const Tensor& x) const override;
  Tensor adjoint(const Tensor& x) const override { return apply(x); }

  double sigma2() const noexcept { return sigma2_; }
  double alpha() const noexcept { return alpha_; }

 private:
  const BlurOperator& blur_;
  const FilterBank& reg_;
  const DiagonalWeights& weights_;
  double sigma2_;
  double alpha_;
};

// A = H^T H + sigma2 G_w^T G_w, the Wiener initialization system.
class WienerOperator final : public LinearMap {
 public:
  WienerOperator(const BlurOperator& blur, const FilterBank& bank, double sigma2);

  Shape input_shape() const override { return blur_.input_shape(); }
  Shape output_shape() const override { return blur_.input_shape(); }
  Tensor apply(const Tensor& x) const override;
  Tensor adjoint(const Tensor& x) const override { return apply(x); }

 private:
  const BlurOperator& blur_;
  const FilterBank& bank_;
  double sigma2_;
};

// (1/sigma2) H^T y + alpha x_prev
Tensor build_rhs(const BlurOperator& blur, const Tensor& y, const Tensor& x_prev, double sigma2, double alpha);

}  // namespace rlsd
