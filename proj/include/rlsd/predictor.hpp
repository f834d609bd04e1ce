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

#include <string>
#include <variant>

#include "rlsd/diffop.hpp"
#include "rlsd/tensor.hpp"

namespace rlsd {

enum class PotentialFamily { kPower, kCharbonnier, kWelsch };

const char* to_string(PotentialFamily f);
PotentialFamily potential_family_from_string(const std::string& s);

// Closed-form IRLS weights w = weight * phi'(t) / t at t = max(|z|, epsilon):
//   power:        phi(t) = t^p / p                   -> t^(p-2)
//   charbonnier:  phi(t) = s^2 (sqrt(1 + t^2/s^2) - 1) -> (1 + t^2/s^2)^(-1/2)
//   welsch:       phi(t) = s^2 (1 - exp(-t^2/(2s^2))) -> exp(-t^2/(2s^2))
struct PotentialPredictor {
  PotentialFamily family = PotentialFamily::kPower;
  double p = 1.0;
  double scale = 1.0;
  double epsilon = 1e-4;
  double weight = 1.0;

  double weight_at(double t) const;
  // d weight_at / dt for t > epsilon.
  double weight_slope(double t) const;
  void validate() const;
};

// Shallow convolutional predictor on F feature channels:
//   a0 = log m,  m = sqrt(z^2 + epsilon^2)
//   a1 = lrelu(conv3x3(a0)),  a2 = lrelu(conv3x3(a1)),  v = conv1x1(a2)
//   w  = exp(gain) * relu(v) / m
// relu(v) plays the role of phi'(|z|) >= 0, so w >= 0 by construction. The
// three layers give a 5x5 receptive field. Convolutions are zero-padded to
// keep the feature size.
struct ConvPredictor {
  std::string prefix = "pred.";
  std::size_t channels = 16;
  double epsilon = 1e-2;
  double leak = 0.1;

  // Adds this predictor's parameters to `params`. `channel_bias` seeds the
  // output bias (relu(v) at init); `log_gain` the overall scale.
  void init_params(ParamSet& params, Rng& rng, double log_gain, double channel_bias = 1.0) const;
  void validate() const;
};

using WeightPredictor = std::variant<PotentialPredictor, ConvPredictor>;

struct PredictorVjp {
  ParamSet d_params;
  Tensor d_z;
};

// W = predict(G x). Output has the shape of z and is >= 0 everywhere.
Tensor predict_weights(const WeightPredictor& pred, const ParamSet& params, const Tensor& z);
PredictorVjp predictor_vjp(const WeightPredictor& pred, const ParamSet& params, const Tensor& z,
                           const Tensor& cotangent);

}  // namespace rlsd
