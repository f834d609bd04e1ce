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

#include <limits>
#include <string>
#include <vector>

#include "rlsd/tensor.hpp"

namespace rlsd {

// Returned by psnr() for identical images.
inline constexpr double kInfinitePsnr = std::numeric_limits<double>::infinity();

// 10 log10(peak^2 / MSE) over all channels.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Mean local SSIM over valid 11x11 Gaussian windows (sigma 1.5,
// K1 = 0.01, K2 = 0.03), averaged over channels.
double ssim(const Tensor& a, const Tensor& b, double peak = 1.0);

struct ImageScore {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct ScoreReport {
  std::size_t border = 0;
  std::vector<ImageScore> images;

  void add(ImageScore score) { images.push_back(std::move(score)); }
  double mean_psnr() const;
  double stddev_psnr() const;
  double mean_ssim() const;
  double stddev_ssim() const;
  // One JSON object per image, then one aggregate line.
  std::string to_jsonl() const;
};

// PSNR and SSIM on the interior left after discarding `border` pixels on
// every side.
ImageScore sun_protocol_score(const Tensor& restored, const Tensor& ground_truth, std::size_t border = 50,
                              double peak = 1.0);

// Noise standard deviation from one level of the Haar transform:
// median(|HH|) / 0.6745, pooled over channels. Odd trailing rows/columns
// are dropped.
double estimate_sigma_wmad(const Tensor& y);

}  // namespace rlsd
