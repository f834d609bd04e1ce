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

#include "rlsd/linop.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "rlsd/errors.hpp"

namespace rlsd {

namespace {

Tensor rotate180(const Tensor& k) {
  Tensor out(k.shape());
  const std::size_t n = k.size();
  for (std::size_t i = 0; i < n; ++i) out[i] = k[n - 1 - i];
  return out;
}

void require_image(const Shape& s, const char* what) {
  if (s.size() != 3) throw DimensionError(std::string(what) + ": expected C x H x W, got " + shape_string(s));
}

}  // namespace

BlurKernel BlurKernel::from_psf(const Tensor& psf) {
  if (psf.rank() != 2 || psf.empty()) throw DimensionError("blur kernel must be a non-empty rank-2 tensor");
  double total = 0.0;
  for (double v : psf.values()) {
    if (!std::isfinite(v) || v < 0.0) throw ParameterError("blur kernel entries must be finite and nonnegative");
    total += v;
  }
  if (!(total > 0.0)) throw ParameterError("blur kernel sums to zero");
  BlurKernel k;
  k.taps_ = rotate180(psf);
  const double tol = 4.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(psf.size());
  if (std::abs(total - 1.0) > tol) {
    k.scale_ = 1.0 / total;
    k.taps_ *= k.scale_;
  }
  return k;
}

BlurKernel BlurKernel::from_taps(Tensor taps) {
  if (taps.rank() != 2 || taps.empty()) throw DimensionError("blur kernel must be a non-empty rank-2 tensor");
  double total = 0.0;
  for (double v : taps.values()) {
    if (!std::isfinite(v) || v < 0.0) throw ParameterError("blur kernel entries must be finite and nonnegative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ParameterError("blur kernel must sum to 1, sums to " + std::to_string(total));
  BlurKernel k;
  k.taps_ = std::move(taps);
  return k;
}

BlurKernel BlurKernel::delta(std::size_t size) {
  if (size % 2 == 0) throw ParameterError("delta kernel size must be odd");
  Tensor t({size, size});
  t(size / 2, size / 2) = 1.0;
  return from_taps(std::move(t));
}

Tensor BlurKernel::to_psf() const { return rotate180(taps_); }

BlurKernel load_kernel(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open kernel file '" + path.string() + "'");
  std::size_t kh = 0, kw = 0;
  if (!(in >> kh >> kw) || kh == 0 || kw == 0) {
    throw IoError("kernel file '" + path.string() + "': first line must be 'kh kw'");
  }
  Tensor psf({kh, kw});
  for (std::size_t i = 0; i < psf.size(); ++i) {
    if (!(in >> psf[i])) {
      throw IoError("kernel file '" + path.string() + "': expected " + std::to_string(kh * kw) +
                    " values, read " + std::to_string(i));
    }
  }
  try {
    return BlurKernel::from_psf(psf);
  } catch (const std::exception& e) {
    throw IoError("kernel file '" + path.string() + "': " + e.what());
  }
}

void save_kernel(const std::filesystem::path& path, const BlurKernel& kernel) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write kernel file '" + path.string() + "'");
  const Tensor psf = kernel.to_psf();
  out << psf.dim(0) << ' ' << psf.dim(1) << '\n';
  char buf[32];
  for (std::size_t i = 0; i < psf.dim(0); ++i) {
    for (std::size_t j = 0; j < psf.dim(1); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", psf(i, j));
      out << (j ? " " : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("failed writing kernel file '" + path.string() + "'");
}

BlurOperator::BlurOperator(BlurKernel kernel, Shape input_shape) : kernel_(std::move(kernel)), in_(std::move(input_shape)) {
  require_image(in_, "BlurOperator");
  if (kernel_.height() > in_[1] || kernel_.width() > in_[2]) {
    throw DimensionError("blur kernel " + shape_string(kernel_.taps().shape()) + " larger than image " +
                         shape_string(in_));
  }
  out_ = {in_[0], in_[1] - kernel_.height() + 1, in_[2] - kernel_.width() + 1};
}

BlurOperator BlurOperator::for_observation(BlurKernel kernel, const Shape& observation_shape) {
  require_image(observation_shape, "BlurOperator");
  Shape latent = {observation_shape[0], observation_shape[1] + kernel.height() - 1,
                  observation_shape[2] + kernel.width() - 1};
  return BlurOperator(std::move(kernel), std::move(latent));
}

Tensor BlurOperator::apply(const Tensor& x) const {
  if (x.shape() != in_) throw DimensionError("blur input " + shape_string(x.shape()) + ", expected " + shape_string(in_));
  Tensor out(out_);
  const std::size_t plane_in = in_[1] * in_[2], plane_out = out_[1] * out_[2];
  for (std::size_t c = 0; c < in_[0]; ++c) {
    correlate_valid_acc(x.data() + c * plane_in, in_[1], in_[2], kernel_.taps().data(), kernel_.height(),
                        kernel_.width(), out.data() + c * plane_out);
  }
  return out;
}

Tensor BlurOperator::adjoint(const Tensor& y) const {
  if (y.shape() != out_) throw DimensionError("blur adjoint input " + shape_string(y.shape()) + ", expected " + shape_string(out_));
  Tensor out(in_);
  const std::size_t plane_in = in_[1] * in_[2], plane_out = out_[1] * out_[2];
  for (std::size_t c = 0; c < in_[0]; ++c) {
    correlate_valid_adjoint_acc(y.data() + c * plane_out, in_[1], in_[2], kernel_.taps().data(),
                                kernel_.height(), kernel_.width(), out.data() + c * plane_in);
  }
  return out;
}

FilterBank::FilterBank(Tensor filters, Shape input_shape) : filters_(std::move(filters)), in_(std::move(input_shape)) {
  require_image(in_, "FilterBank");
  if (filters_.rank() != 4 || filters_.dim(1) != in_[0]) {
    throw DimensionError("filter bank " + shape_string(filters_.shape()) + " incompatible with input " +
                         shape_string(in_));
  }
  if (filters_.dim(2) > in_[1] || filters_.dim(3) > in_[2] || filters_.dim(2) == 0 || filters_.dim(3) == 0) {
    throw DimensionError("filters " + shape_string(filters_.shape()) + " larger than input " + shape_string(in_));
  }
  out_ = {filters_.dim(0), in_[1] - filters_.dim(2) + 1, in_[2] - filters_.dim(3) + 1};
}

Tensor FilterBank::apply(const Tensor& x) const {
  if (x.shape() != in_) throw DimensionError("filter bank input " + shape_string(x.shape()) + ", expected " + shape_string(in_));
  Tensor out(out_);
  const std::size_t kh = filters_.dim(2), kw = filters_.dim(3), channels = in_[0];
  const std::size_t plane_in = in_[1] * in_[2], plane_out = out_[1] * out_[2];
  for (std::size_t f = 0; f < out_[0]; ++f)
    for (std::size_t c = 0; c < channels; ++c)
      correlate_valid_acc(x.data() + c * plane_in, in_[1], in_[2], filters_.data() + (f * channels + c) * kh * kw,
                          kh, kw, out.data() + f * plane_out);
  return out;
}

Tensor FilterBank::adjoint(const Tensor& z) const {
  if (z.shape() != out_) throw DimensionError("filter bank adjoint input " + shape_string(z.shape()) + ", expected " + shape_string(out_));
  Tensor out(in_);
  const std::size_t kh = filters_.dim(2), kw = filters_.dim(3), channels = in_[0];
  const std::size_t plane_in = in_[1] * in_[2], plane_out = out_[1] * out_[2];
  for (std::size_t f = 0; f < out_[0]; ++f)
    for (std::size_t c = 0; c < channels; ++c)
      correlate_valid_adjoint_acc(z.data() + f * plane_out, in_[1], in_[2],
                                  filters_.data() + (f * channels + c) * kh * kw, kh, kw, out.data() + c * plane_in);
  return out;
}

Tensor FilterBank::filter_grad(const Tensor& x, const Tensor& cotangent) const {
  if (x.shape() != in_ || cotangent.shape() != out_) {
    throw DimensionError("filter_grad: got input " + shape_string(x.shape()) + " and cotangent " +
                         shape_string(cotangent.shape()) + ", expected " + shape_string(in_) + " and " +
                         shape_string(out_));
  }
  Tensor grad(filters_.shape());
  const std::size_t kh = filters_.dim(2), kw = filters_.dim(3), channels = in_[0];
  const std::size_t plane_in = in_[1] * in_[2], plane_out = out_[1] * out_[2];
  for (std::size_t f = 0; f < out_[0]; ++f)
    for (std::size_t c = 0; c < channels; ++c)
      correlate_valid_kernel_grad_acc(x.data() + c * plane_in, in_[1], in_[2], cotangent.data() + f * plane_out,
                                      kh, kw, grad.data() + (f * channels + c) * kh * kw);
  return grad;
}

DiagonalWeights::DiagonalWeights(Tensor weights) : weights_(std::move(weights)) {
  for (double v : weights_.values()) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ParameterError("diagonal weights must be finite and nonnegative");
  }
}

Tensor DiagonalWeights::apply(const Tensor& z) const {
  require_same_shape(weights_, z, "DiagonalWeights");
  Tensor out = z;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= weights_[i];
  return out;
}

SystemOperator::SystemOperator(const BlurOperator& blur, const FilterBank& reg, const DiagonalWeights& weights,
                               double sigma2, double alpha)
    : blur_(blur), reg_(reg), weights_(weights), sigma2_(sigma2), alpha_(alpha) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) throw ParameterError("sigma2 must be positive");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ParameterError("alpha must be positive");
  if (reg.input_shape() != blur.input_shape()) throw DimensionError("regularizer and blur act on different shapes");
  if (weights.input_shape() != reg.output_shape()) {
    throw DimensionError("weights " + shape_string(weights.input_shape()) + " do not match features " +
                         shape_string(reg.output_shape()));
  }
}

Tensor SystemOperator::apply(const Tensor& x) const {
  Tensor out = blur_.adjoint(blur_.apply(x));
  out *= 1.0 / sigma2_;
  if (reg_.features() > 0) out += reg_.adjoint(weights_.apply(reg_.apply(x)));
  axpy(alpha_, x, out);
  return out;
}

WienerOperator::WienerOperator(const BlurOperator& blur, const FilterBank& bank, double sigma2)
    : blur_(blur), bank_(bank), sigma2_(sigma2) {
  if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw ParameterError("sigma2 must be nonnegative");
  if (bank.input_shape() != blur.input_shape()) throw DimensionError("Wiener bank and blur act on different shapes");
}

Tensor WienerOperator::apply(const Tensor& x) const {
  Tensor out = blur_.adjoint(blur_.apply(x));
  if (bank_.features() > 0 && sigma2_ > 0.0) axpy(sigma2_, bank_.adjoint(bank_.apply(x)), out);
  return out;
}

Tensor build_rhs(const BlurOperator& blur, const Tensor& y, const Tensor& x_prev, double sigma2, double alpha) {
  if (!(sigma2 > 0.0)) throw ParameterError("sigma2 must be positive");
  if (x_prev.shape() != blur.input_shape()) {
    throw DimensionError("x_prev " + shape_string(x_prev.shape()) + " does not match " + shape_string(blur.input_shape()));
  }
  Tensor rhs = blur.adjoint(y);
  rhs *= 1.0 / sigma2;
  axpy(alpha, x_prev, rhs);
  return rhs;
}

}  // namespace rlsd
