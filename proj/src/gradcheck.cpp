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

#include "rlsd/gradcheck.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>

#include "rlsd/implicit_layer.hpp"
#include "rlsd/model.hpp"
#include "rlsd/predictor.hpp"

namespace rlsd {

namespace {

constexpr CgConfig kTight{5000, 1e-12};

double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-12});
  return std::abs(a - b) / scale;
}

Tensor random_like(Rng& rng, const Shape& shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

BlurKernel random_kernel(Rng& rng, std::size_t k) { return BlurKernel::from_psf(random_like(rng, {k, k}, 0.0, 1.0)); }

// Central difference of f along d.
double central(const std::function<double(double)>& f, double h) { return (f(h) - f(-h)) / (2.0 * h); }

void add(GradCheckReport& r, std::string name, double analytic, double numeric) {
  r.entries.push_back({std::move(name), analytic, numeric, rel_err(analytic, numeric)});
}

// ------------------------------------------------------------ single layer

struct LayerCase {
  BlurKernel kernel;
  Tensor y, x_prev, c;
  Tensor filters;
  double beta = -0.5;
  double sigma2 = 0.05;
  ConvPredictor pred;
  ParamSet params;
};

LayerCase make_layer_case(std::uint64_t seed) {
  Rng rng(seed);
  LayerCase t;
  t.kernel = random_kernel(rng, 3);
  t.y = random_like(rng, {1, 10, 10}, 0.0, 1.0);
  t.x_prev = random_like(rng, {1, 12, 12}, 0.0, 1.0);
  t.c = random_like(rng, {1, 12, 12});
  t.filters = random_like(rng, {2, 1, 3, 3});
  t.pred.channels = 2;
  t.pred.prefix = "pred.";
  Rng prng = rng.split(7);
  t.pred.init_params(t.params, prng, 0.0, 1.0);
  for (auto& [name, v] : t.params)
    for (double& x : v.values()) x += 0.1 * rng.uniform(-1.0, 1.0);
  return t;
}

// L = <x*, c> + 0.5 ||x*||^2.
double layer_loss(const LayerCase& t) {
  const BlurOperator h(t.kernel, t.x_prev.shape());
  const Tensor z = FilterBank(t.filters, t.x_prev.shape()).apply(t.x_prev);
  NnlsLayer layer{t.filters, t.beta, kTight, kTight};
  const Tensor x = *nnls_forward(layer, h, t.y, std::make_shared<const Tensor>(t.x_prev),
                                 DiagonalWeights(predict_weights(t.pred, t.params, z)), t.sigma2)
                        .x;
  return dot(x, t.c) + 0.5 * dot(x, x);
}

}  // namespace

double GradCheckReport::max_rel_err() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, std::isfinite(e.rel_err) ? e.rel_err : INFINITY);
  return m;
}

std::string GradCheckReport::to_jsonl() const {
  std::string out;
  for (const auto& e : entries) {
    nlohmann::json j{{"check", e.name},         {"analytic", e.analytic},           {"numeric", e.numeric},
                     {"rel_err", e.rel_err}, {"pass", e.rel_err <= tolerance}};
    out += j.dump() + "\n";
  }
  return out;
}

GradCheckReport grad_check_layer(std::uint64_t seed) {
  const LayerCase t = make_layer_case(seed);
  const BlurOperator h(t.kernel, t.x_prev.shape());
  const FilterBank bank(t.filters, t.x_prev.shape());
  const Tensor z = bank.apply(t.x_prev);
  NnlsLayer layer{t.filters, t.beta, kTight, kTight};
  const auto f = nnls_forward(layer, h, t.y, std::make_shared<const Tensor>(t.x_prev),
                              DiagonalWeights(predict_weights(t.pred, t.params, z)), t.sigma2);
  const NnlsGradients g = nnls_backward(layer, f.saved, t.c + *f.x);
  const PredictorVjp pv = predictor_vjp(t.pred, t.params, z, g.d_weights);
  // Filters reach the loss through S and through the predictor input.
  Tensor d_filters = g.d_filters + bank.filter_grad(t.x_prev, pv.d_z);
  Tensor d_x_prev = g.d_x_prev + bank.adjoint(pv.d_z);

  GradCheckReport r;
  constexpr double kStep = 1e-5;
  add(r, "layer/beta", g.d_beta, central([&](double e) {
        LayerCase p = t;
        p.beta += e;
        return layer_loss(p);
      }, kStep));

  Rng rng(seed ^ 0x9E37ull);
  auto probe_tensor = [&](const std::string& name, const Tensor& grad, auto&& perturb) {
    const Tensor d = random_like(rng, grad.shape());
    add(r, name, dot(grad, d), central([&](double e) {
          LayerCase p = t;
          axpy(e, d, perturb(p));
          return layer_loss(p);
        }, kStep));
  };
  probe_tensor("layer/filters", d_filters, [](LayerCase& p) -> Tensor& { return p.filters; });
  probe_tensor("layer/x_prev", d_x_prev, [](LayerCase& p) -> Tensor& { return p.x_prev; });
  for (const auto& [name, grad] : pv.d_params) {
    const std::string key = name;
    probe_tensor("layer/" + key, grad, [&key](LayerCase& p) -> Tensor& { return p.params.at(key); });
  }
  return r;
}

GradCheckReport grad_check_wiener(std::uint64_t seed) {
  Rng rng(seed);
  const BlurKernel kernel = random_kernel(rng, 3);
  const Tensor y = random_like(rng, {1, 10, 10}, 0.0, 1.0);
  const Tensor filters = random_like(rng, {2, 1, 3, 3});
  const Tensor c = random_like(rng, {1, 12, 12});
  constexpr double kSigma2 = 0.05;
  const BlurOperator h(kernel, {1, 12, 12});
  auto loss = [&](const Tensor& fl) {
    const Tensor x = *wiener_forward(WienerLayer{fl, kTight, kTight}, h, y, kSigma2).x;
    return dot(x, c) + 0.5 * dot(x, x);
  };
  WienerLayer layer{filters, kTight, kTight};
  const auto f = wiener_forward(layer, h, y, kSigma2);
  const WienerGradients g = wiener_backward(layer, f.saved, c + *f.x);

  GradCheckReport r;
  for (int probe = 0; probe < 2; ++probe) {
    const Tensor d = random_like(rng, filters.shape());
    add(r, "wiener/filters#" + std::to_string(probe), dot(g.d_filters, d), central([&](double e) {
          Tensor p = filters;
          axpy(e, d, p);
          return loss(p);
        }, 1e-5));
  }
  return r;
}

GradCheckReport grad_check_pipeline(std::uint64_t seed) {
  Rng rng(seed);
  ModelConfig cfg;
  cfg.reg_filters = 2;
  cfg.reg_size = 3;
  cfg.wiener_filters = 2;
  cfg.wiener_size = 3;
  cfg.steps = 2;
  cfg.init_log_gain = 0.0;
  cfg.init_beta = -1.0;
  cfg.cg_forward = kTight;
  cfg.cg_backward = kTight;
  RlsdnModel model = RlsdnModel::initialize(cfg, seed);
  for (auto& [name, t] : model.params())
    for (double& v : t.values()) v += 0.1 * rng.uniform(-1.0, 1.0);

  Sample s;
  s.kernel = random_kernel(rng, 3);
  s.x_gt = random_like(rng, {1, 12, 12}, 0.0, 1.0);
  s.y = BlurOperator(s.kernel, s.x_gt.shape()).apply(s.x_gt);
  for (double& v : s.y.values()) v += 0.05 * rng.normal();
  s.sigma = 0.05;

  const auto grad = model.loss_and_gradient(s);
  auto loss_with = [&](const std::string& name, const Tensor& d, double e) {
    RlsdnModel m = model;
    axpy(e, d, m.params().at(name));
    return loss_sum_mse(m.restore(s.y, s.kernel, s.sigma).trace, s.x_gt).loss;
  };

  GradCheckReport r;
  // The pipeline nests several solves; a wider step keeps the difference
  // above solver round-off.
  constexpr double kStep = 1e-4;
  for (const auto& [name, t] : model.params()) {
    const Tensor d = random_like(rng, t.shape());
    add(r, "pipeline/" + name, dot(grad.grads.at(name), d),
        central([&, key = name](double e) { return loss_with(key, d, e); }, kStep));
  }
  return r;
}

GradCheckReport grad_check_all(std::uint64_t seed) {
  GradCheckReport all;
  for (auto* part : {&grad_check_layer, &grad_check_wiener, &grad_check_pipeline}) {
    GradCheckReport r = part(seed);
    all.entries.insert(all.entries.end(), r.entries.begin(), r.entries.end());
  }
  return all;
}

}  // namespace rlsd
