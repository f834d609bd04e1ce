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

#include "rlsd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "rlsd/errors.hpp"

namespace rlsd {
namespace {

constexpr std::size_t kWindow = 11;
constexpr double kWindowSigma = 1.5;

Tensor gaussian_window() {
  Tensor k({kWindow, kWindow});
  const double c = (kWindow - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < kWindow; ++i)
    for (std::size_t j = 0; j < kWindow; ++j) {
      const double di = i - c, dj = j - c;
      k(i, j) = std::exp(-(di * di + dj * dj) / (2.0 * kWindowSigma * kWindowSigma));
      total += k(i, j);
    }
  k *= 1.0 / total;
  return k;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  if (!std::isfinite(m)) return 0.0;
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

}  // namespace

double psnr(const Tensor& a, const Tensor& b, double peak) {
  require_same_shape(a, b, "psnr");
  if (!(peak > 0.0)) throw ParameterError("psnr peak must be positive");
  if (a.empty()) throw DimensionError("psnr of empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return kInfinitePsnr;
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Tensor& a_in, const Tensor& b_in, double peak) {
  require_same_shape(a_in, b_in, "ssim");
  const Tensor a = as_image(a_in), b = as_image(b_in);
  const std::size_t channels = a.dim(0), h = a.dim(1), w = a.dim(2);
  if (h < kWindow || w < kWindow) {
    throw DimensionError("ssim needs at least " + std::to_string(kWindow) + "x" + std::to_string(kWindow) +
                         " pixels, got " + shape_string(a_in.shape()));
  }
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  const Tensor win = gaussian_window();
  const std::size_t oh = h - kWindow + 1, ow = w - kWindow + 1, plane = h * w, n = oh * ow;
  std::vector<double> aa(plane), bb(plane), ab(plane);
  std::vector<double> mu_a(n), mu_b(n), s_aa(n), s_bb(n), s_ab(n);
  double total = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* pa = a.data() + c * plane;
    const double* pb = b.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      aa[i] = pa[i] * pa[i];
      bb[i] = pb[i] * pb[i];
      ab[i] = pa[i] * pb[i];
    }
    for (auto* v : {&mu_a, &mu_b, &s_aa, &s_bb, &s_ab}) std::fill(v->begin(), v->end(), 0.0);
    correlate_valid_acc(pa, h, w, win.data(), kWindow, kWindow, mu_a.data());
    correlate_valid_acc(pb, h, w, win.data(), kWindow, kWindow, mu_b.data());
    correlate_valid_acc(aa.data(), h, w, win.data(), kWindow, kWindow, s_aa.data());
    correlate_valid_acc(bb.data(), h, w, win.data(), kWindow, kWindow, s_bb.data());
    correlate_valid_acc(ab.data(), h, w, win.data(), kWindow, kWindow, s_ab.data());
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ma = mu_a[i], mb = mu_b[i];
      const double va = s_aa[i] - ma * ma, vb = s_bb[i] - mb * mb, cov = s_ab[i] - ma * mb;
      acc += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total += acc / static_cast<double>(n);
  }
  return std::clamp(total / static_cast<double>(channels), -1.0, 1.0);
}

double ScoreReport::mean_psnr() const {
  std::vector<double> v;
  for (const auto& s : images) v.push_back(s.psnr);
  return mean_of(v);
}

double ScoreReport::stddev_psnr() const {
  std::vector<double> v;
  for (const auto& s : images) v.push_back(s.psnr);
  return stddev_of(v);
}

double ScoreReport::mean_ssim() const {
  std::vector<double> v;
  for (const auto& s : images) v.push_back(s.ssim);
  return mean_of(v);
}

double ScoreReport::stddev_ssim() const {
  std::vector<double> v;
  for (const auto& s : images) v.push_back(s.ssim);
  return stddev_of(v);
}

std::string ScoreReport::to_jsonl() const {
  std::string out;
  for (const auto& s : images) {
    nlohmann::json j{{"image", s.name}, {"psnr", number_or_null(s.psnr)}, {"ssim", s.ssim}, {"border", border}};
    if (std::isinf(s.psnr)) j["psnr_infinite"] = true;
    out += j.dump() + "\n";
  }
  nlohmann::json agg{{"images", images.size()},           {"border", border},
                     {"mean_psnr", number_or_null(mean_psnr())}, {"std_psnr", stddev_psnr()},
                     {"mean_ssim", mean_ssim()},            {"std_ssim", stddev_ssim()}};
  out += agg.dump() + "\n";
  return out;
}

ImageScore sun_protocol_score(const Tensor& restored, const Tensor& ground_truth, std::size_t border, double peak) {
  require_same_shape(restored, ground_truth, "sun_protocol_score");
  const Tensor r = as_image(restored), g = as_image(ground_truth);
  const std::size_t h = r.dim(1), w = r.dim(2);
  if (h < 2 * border + 1 || w < 2 * border + 1) {
    throw DimensionError("image " + shape_string(restored.shape()) + " too small for a " + std::to_string(border) +
                         "-pixel border");
  }
  const Tensor rc = crop(r, border, border, h - 2 * border, w - 2 * border);
  const Tensor gc = crop(g, border, border, h - 2 * border, w - 2 * border);
  ImageScore s;
  s.psnr = psnr(rc, gc, peak);
  s.ssim = ssim(rc, gc, peak);
  return s;
}

double estimate_sigma_wmad(const Tensor& y_in) {
  const Tensor y = as_image(y_in);
  const std::size_t channels = y.dim(0), h = y.dim(1) / 2, w = y.dim(2) / 2;
  if (h == 0 || w == 0) throw DimensionError("WMAD needs at least 2x2 pixels, got " + shape_string(y_in.shape()));
  std::vector<double> d;
  d.reserve(channels * h * w);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        const double v = y(c, 2 * i, 2 * j) - y(c, 2 * i, 2 * j + 1) - y(c, 2 * i + 1, 2 * j) +
                         y(c, 2 * i + 1, 2 * j + 1);
        d.push_back(std::abs(0.5 * v));
      }
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  double med = d[mid];
  if (d.size() % 2 == 0) {
    const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  return med / 0.6745;
}

}  // namespace rlsd
