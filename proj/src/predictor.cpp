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

#include "rlsd/predictor.hpp"

#include <algorithm>
#include <cmath>

#include "rlsd/errors.hpp"
#include "rlsd/linop.hpp"

namespace rlsd {

const char* to_string(PotentialFamily f) {
  switch (f) {
    case PotentialFamily::kPower: return "power";
    case PotentialFamily::kCharbonnier: return "charbonnier";
    case PotentialFamily::kWelsch: return "welsch";
  }
  return "power";
}

PotentialFamily potential_family_from_string(const std::string& s) {
  if (s == "power") return PotentialFamily::kPower;
  if (s == "charbonnier") return PotentialFamily::kCharbonnier;
  if (s == "welsch") return PotentialFamily::kWelsch;
  throw ParameterError("unknown potential family '" + s + "'");
}

double PotentialPredictor::weight_at(double t) const {
  switch (family) {
    case PotentialFamily::kPower: return weight * std::pow(t, p - 2.0);
    case PotentialFamily::kCharbonnier: return weight / std::sqrt(1.0 + (t * t) / (scale * scale));
    case PotentialFamily::kWelsch: return weight * std::exp(-(t * t) / (2.0 * scale * scale));
  }
  return 0.0;
}

double PotentialPredictor::weight_slope(double t) const {
  switch (family) {
    case PotentialFamily::kPower: return p == 2.0 ? 0.0 : weight * (p - 2.0) * std::pow(t, p - 3.0);
    case PotentialFamily::kCharbonnier: {
      const double q = 1.0 + (t * t) / (scale * scale);
      return -weight * (t / (scale * scale)) / (q * std::sqrt(q));
    }
    case PotentialFamily::kWelsch:
      return -weight * (t / (scale * scale)) * std::exp(-(t * t) / (2.0 * scale * scale));
  }
  return 0.0;
}

void PotentialPredictor::validate() const {
  if (!(epsilon > 0.0)) throw ParameterError("potential epsilon must be positive");
  if (!(weight >= 0.0)) throw ParameterError("potential weight must be nonnegative");
  if (family == PotentialFamily::kPower && !(p > 0.0 && p <= 2.0)) throw ParameterError("power potential needs p in (0, 2]");
  if (family != PotentialFamily::kPower && !(scale > 0.0)) throw ParameterError("potential scale must be positive");
}

namespace {

constexpr std::size_t kHiddenSize = 3;

double lrelu(double x, double leak) { return x > 0.0 ? x : leak * x; }

// Zero-padded ("same") multi-channel convolution built on the valid bank.
Tensor conv_same(const Tensor& filters, const Tensor& bias, const Tensor& x) {
  const std::size_t pad = (filters.dim(2) - 1) / 2;
  const Tensor padded = pad == 0 ? x : pad_zero(x, pad);
  Tensor out = FilterBank(filters, padded.shape()).apply(padded);
  const std::size_t plane = out.dim(1) * out.dim(2);
  for (std::size_t f = 0; f < out.dim(0); ++f)
    for (std::size_t i = 0; i < plane; ++i) out[f * plane + i] += bias[f];
  return out;
}

struct ConvSameVjp {
  Tensor d_filters, d_bias, d_x;
};

ConvSameVjp conv_same_vjp(const Tensor& filters, const Tensor& x, const Tensor& cot) {
  const std::size_t pad = (filters.dim(2) - 1) / 2;
  const Tensor padded = pad == 0 ? x : pad_zero(x, pad);
  const FilterBank bank(filters, padded.shape());
  ConvSameVjp out;
  out.d_filters = bank.filter_grad(padded, cot);
  out.d_bias = Tensor({filters.dim(0)});
  const std::size_t plane = cot.dim(1) * cot.dim(2);
  for (std::size_t f = 0; f < cot.dim(0); ++f) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += cot[f * plane + i];
    out.d_bias[f] = acc;
  }
  Tensor d_padded = bank.adjoint(cot);
  out.d_x = pad == 0 ? std::move(d_padded) : crop(d_padded, pad, pad, x.dim(1), x.dim(2));
  return out;
}

// Activations of one ConvPredictor forward pass.
struct ConvTrace {
  Tensor m, pre1, pre2, v, w;
};

ConvTrace conv_forward(const ConvPredictor& cp, const ParamSet& params, const Tensor& z) {
  if (z.rank() != 3 || z.dim(0) != cp.channels) {
    throw DimensionError("conv predictor expects " + std::to_string(cp.channels) + " feature channels, got " +
                         shape_string(z.shape()));
  }
  ConvTrace t;
  t.m = Tensor(z.shape());
  Tensor a0(z.shape());
  const double eps2 = cp.epsilon * cp.epsilon;
  for (std::size_t i = 0; i < z.size(); ++i) {
    t.m[i] = std::sqrt(z[i] * z[i] + eps2);
    a0[i] = std::log(t.m[i]);
  }
  t.pre1 = conv_same(params.at(cp.prefix + "c1.w"), params.at(cp.prefix + "c1.b"), a0);
  Tensor a1 = t.pre1;
  for (double& v : a1.values()) v = lrelu(v, cp.leak);
  t.pre2 = conv_same(params.at(cp.prefix + "c2.w"), params.at(cp.prefix + "c2.b"), a1);
  Tensor a2 = t.pre2;
  for (double& v : a2.values()) v = lrelu(v, cp.leak);
  t.v = conv_same(params.at(cp.prefix + "c3.w"), params.at(cp.prefix + "c3.b"), a2);
  const double gain = std::exp(params.at(cp.prefix + "gain")[0]);
  t.w = Tensor(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) t.w[i] = gain * std::max(t.v[i], 0.0) / t.m[i];
  return t;
}

PredictorVjp conv_vjp(const ConvPredictor& cp, const ParamSet& params, const Tensor& z, const Tensor& cot) {
  require_same_shape(z, cot, "predictor_vjp");
  const ConvTrace t = conv_forward(cp, params, z);
  const double gain = std::exp(params.at(cp.prefix + "gain")[0]);
  PredictorVjp out;

  Tensor d_v(z.shape());
  Tensor d_m(z.shape());
  double d_gain = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    d_gain += cot[i] * t.w[i];
    if (t.v[i] > 0.0) d_v[i] = cot[i] * gain / t.m[i];
    d_m[i] = -cot[i] * t.w[i] / t.m[i];
  }

  Tensor a2 = t.pre2;
  for (double& v : a2.values()) v = lrelu(v, cp.leak);
  ConvSameVjp g3 = conv_same_vjp(params.at(cp.prefix + "c3.w"), a2, d_v);
  Tensor d_pre2 = std::move(g3.d_x);
  for (std::size_t i = 0; i < d_pre2.size(); ++i)
    if (t.pre2[i] <= 0.0) d_pre2[i] *= cp.leak;

  Tensor a1 = t.pre1;
  for (double& v : a1.values()) v = lrelu(v, cp.leak);
  ConvSameVjp g2 = conv_same_vjp(params.at(cp.prefix + "c2.w"), a1, d_pre2);
  Tensor d_pre1 = std::move(g2.d_x);
  for (std::size_t i = 0; i < d_pre1.size(); ++i)
    if (t.pre1[i] <= 0.0) d_pre1[i] *= cp.leak;

  Tensor a0(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) a0[i] = std::log(t.m[i]);
  ConvSameVjp g1 = conv_same_vjp(params.at(cp.prefix + "c1.w"), a0, d_pre1);

  out.d_z = Tensor(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double dm = d_m[i] + g1.d_x[i] / t.m[i];
    out.d_z[i] = dm * z[i] / t.m[i];
  }
  out.d_params.add(cp.prefix + "gain", Tensor({1}, std::vector<double>{d_gain}));
  out.d_params.add(cp.prefix + "c1.w", std::move(g1.d_filters));
  out.d_params.add(cp.prefix + "c1.b", std::move(g1.d_bias));
  out.d_params.add(cp.prefix + "c2.w", std::move(g2.d_filters));
  out.d_params.add(cp.prefix + "c2.b", std::move(g2.d_bias));
  out.d_params.add(cp.prefix + "c3.w", std::move(g3.d_filters));
  out.d_params.add(cp.prefix + "c3.b", std::move(g3.d_bias));
  return out;
}

}  // namespace

void ConvPredictor::init_params(ParamSet& params, Rng& rng, double log_gain, double channel_bias) const {
  validate();
  const std::size_t f = channels;
  auto random_filters = [&](std::size_t k, double stddev) {
    Tensor w({f, f, k, k});
    for (double& v : w.values()) v = stddev * rng.normal();
    return w;
  };
  const double hidden_std = 0.5 / std::sqrt(static_cast<double>(f * kHiddenSize * kHiddenSize));
  params.add(prefix + "gain", Tensor({1}, std::vector<double>{log_gain}));
  params.add(prefix + "c1.w", random_filters(kHiddenSize, hidden_std));
  params.add(prefix + "c1.b", Tensor({f}));
  params.add(prefix + "c2.w", random_filters(kHiddenSize, hidden_std));
  params.add(prefix + "c2.b", Tensor({f}));
  params.add(prefix + "c3.w", random_filters(1, 0.01 / std::sqrt(static_cast<double>(f))));
  params.add(prefix + "c3.b", Tensor({f}, channel_bias));
}

void ConvPredictor::validate() const {
  if (channels == 0) throw ParameterError("conv predictor needs at least one channel");
  if (!(epsilon > 0.0)) throw ParameterError("conv predictor epsilon must be positive");
  if (!(leak >= 0.0 && leak < 1.0)) throw ParameterError("leak must lie in [0, 1)");
}

Tensor predict_weights(const WeightPredictor& pred, const ParamSet& params, const Tensor& z) {
  if (const auto* pp = std::get_if<PotentialPredictor>(&pred)) {
    Tensor w(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) w[i] = pp->weight_at(std::max(std::abs(z[i]), pp->epsilon));
    return w;
  }
  return conv_forward(std::get<ConvPredictor>(pred), params, z).w;
}

PredictorVjp predictor_vjp(const WeightPredictor& pred, const ParamSet& params, const Tensor& z,
                           const Tensor& cotangent) {
  if (const auto* pp = std::get_if<PotentialPredictor>(&pred)) {
    require_same_shape(z, cotangent, "predictor_vjp");
    PredictorVjp out;
    out.d_z = Tensor(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double t = std::abs(z[i]);
      // Clamped region is locally constant.
      if (t <= pp->epsilon || cotangent[i] == 0.0) continue;
      out.d_z[i] = cotangent[i] * pp->weight_slope(t) * (z[i] > 0.0 ? 1.0 : -1.0);
    }
    return out;
  }
  return conv_vjp(std::get<ConvPredictor>(pred), params, z, cotangent);
}

}  // namespace rlsd
