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

// Dense reference constructions used as independent oracles. Every matrix
// here is assembled entry by entry from the textbook definition, never by
// probing the operators under test.

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "rlsd/tensor.hpp"

namespace oracle {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline Vec vec(const rlsd::Tensor& t) {
  Vec v(static_cast<Eigen::Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) v[static_cast<Eigen::Index>(i)] = t[i];
  return v;
}

inline rlsd::Tensor unvec(const Vec& v, const rlsd::Shape& shape) {
  rlsd::Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = v[static_cast<Eigen::Index>(i)];
  return t;
}

// True 2-D convolution of an h x w plane with `psf`, valid part only:
// out[i][j] = sum_{u,v} psf[u][v] * in[i + kh-1-u][j + kw-1-v].
inline Mat convolution_matrix(const rlsd::Tensor& psf, std::size_t h, std::size_t w) {
  const std::size_t kh = psf.dim(0), kw = psf.dim(1), oh = h - kh + 1, ow = w - kw + 1;
  Mat m = Mat::Zero(static_cast<Eigen::Index>(oh * ow), static_cast<Eigen::Index>(h * w));
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j)
      for (std::size_t u = 0; u < kh; ++u)
        for (std::size_t v = 0; v < kw; ++v)
          m(static_cast<Eigen::Index>(i * ow + j),
            static_cast<Eigen::Index>((i + kh - 1 - u) * w + (j + kw - 1 - v))) += psf(u, v);
  return m;
}

// Valid cross-correlation: out[i][j] = sum_{u,v} k[u][v] * in[i+u][j+v].
inline Mat correlation_matrix(const double* k, std::size_t kh, std::size_t kw, std::size_t h, std::size_t w) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  Mat m = Mat::Zero(static_cast<Eigen::Index>(oh * ow), static_cast<Eigen::Index>(h * w));
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j)
      for (std::size_t u = 0; u < kh; ++u)
        for (std::size_t v = 0; v < kw; ++v)
          m(static_cast<Eigen::Index>(i * ow + j), static_cast<Eigen::Index>((i + u) * w + j + v)) += k[u * kw + v];
  return m;
}

inline Mat correlation_matrix(const rlsd::Tensor& k, std::size_t h, std::size_t w) {
  return correlation_matrix(k.data(), k.dim(0), k.dim(1), h, w);
}

// Per-channel blur of a C x h x w image with shared correlation taps.
inline Mat blur_matrix(const rlsd::Tensor& taps, std::size_t c, std::size_t h, std::size_t w) {
  const Mat one = correlation_matrix(taps, h, w);
  Mat m = Mat::Zero(one.rows() * static_cast<Eigen::Index>(c), one.cols() * static_cast<Eigen::Index>(c));
  for (std::size_t ch = 0; ch < c; ++ch)
    m.block(one.rows() * static_cast<Eigen::Index>(ch), one.cols() * static_cast<Eigen::Index>(ch), one.rows(),
            one.cols()) = one;
  return m;
}

// Filter bank F x C x kh x kw acting on a C x h x w image.
inline Mat bank_matrix(const rlsd::Tensor& filters, std::size_t h, std::size_t w) {
  const std::size_t f = filters.dim(0), c = filters.dim(1), kh = filters.dim(2), kw = filters.dim(3);
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  Mat m = Mat::Zero(static_cast<Eigen::Index>(f * oh * ow), static_cast<Eigen::Index>(c * h * w));
  for (std::size_t a = 0; a < f; ++a)
    for (std::size_t ch = 0; ch < c; ++ch)
      m.block(static_cast<Eigen::Index>(a * oh * ow), static_cast<Eigen::Index>(ch * h * w),
              static_cast<Eigen::Index>(oh * ow), static_cast<Eigen::Index>(h * w)) =
          correlation_matrix(filters.data() + (a * c + ch) * kh * kw, kh, kw, h, w);
  return m;
}

inline double rel_err(const Vec& got, const Vec& want) {
  const double d = (got - want).norm(), n = want.norm();
  return n > 0 ? d / n : d;
}

inline double rel_err(const rlsd::Tensor& got, const rlsd::Tensor& want) { return rel_err(vec(got), vec(want)); }

inline double rel_err(double got, double want) {
  const double d = std::abs(got - want), n = std::abs(want);
  return n > 0 ? d / n : d;
}

// Central difference of f along the unit vector e_i of `x`.
inline double central_difference(const std::function<double(const rlsd::Tensor&)>& f, rlsd::Tensor x,
                                 std::size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double fp = f(x);
  x[i] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

// Directional central difference of f at x along d.
inline double directional_difference(const std::function<double(const rlsd::Tensor&)>& f, const rlsd::Tensor& x,
                                     const rlsd::Tensor& d, double h) {
  rlsd::Tensor xp = x, xm = x;
  rlsd::axpy(h, d, xp);
  rlsd::axpy(-h, d, xm);
  return (f(xp) - f(xm)) / (2.0 * h);
}

inline rlsd::Tensor random_tensor(rlsd::Rng& rng, const rlsd::Shape& shape, double lo = -1.0, double hi = 1.0) {
  rlsd::Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace oracle
