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

#include "rlsd/implicit_layer.hpp"

#include <cmath>

#include "rlsd/errors.hpp"

namespace rlsd {

std::size_t SavedForward::owned_bytes() const noexcept {
  std::size_t n = features.size() + filters.size();
  if (weights) n += weights->weights().size();
  if (blur) n += blur->kernel().taps().size();
  return n * sizeof(double);
}

LayerForward nnls_forward(const NnlsLayer& layer, const BlurOperator& blur, const Tensor& y,
                          std::shared_ptr<const Tensor> x_prev, DiagonalWeights weights, double sigma2) {
  if (!x_prev) throw ParameterError("nnls_forward: missing previous estimate");
  if (!(sigma2 > 0.0)) throw ParameterError("nnls_forward: sigma2 must be positive");
  const double alpha = std::exp(layer.beta);
  const FilterBank reg(layer.reg_filters, blur.input_shape());
  const SystemOperator s(blur, reg, weights, sigma2, alpha);
  const Tensor rhs = build_rhs(blur, y, *x_prev, sigma2, alpha);

  CgResult solved = cg_solve(s, rhs, *x_prev, layer.cg_forward);
  LayerForward out;
  out.x = std::make_shared<const Tensor>(std::move(solved.x));
  out.report = std::move(solved.report);
  out.saved.x_star = out.x;
  out.saved.x_prev = std::move(x_prev);
  out.saved.weights.emplace(std::move(weights));
  out.saved.blur.emplace(blur);
  out.saved.filters = layer.reg_filters;
  out.saved.beta = layer.beta;
  out.saved.sigma2 = sigma2;
  return out;
}

NnlsGradients nnls_backward(const NnlsLayer& layer, const SavedForward& saved, const Tensor& rho) {
  if (!saved.x_star || !saved.x_prev || !saved.weights || !saved.blur) {
    throw ParameterError("nnls_backward: incomplete saved forward state");
  }
  const Tensor& x_star = *saved.x_star;
  require_same_shape(x_star, rho, "nnls_backward");
  const double alpha = std::exp(saved.beta);
  const FilterBank reg(saved.filters, x_star.shape());
  const SystemOperator s(*saved.blur, reg, *saved.weights, saved.sigma2, alpha);

  CgResult adj = layer.warm_start_backward
                     ? cg_solve(s, rho, (1.0 / (1.0 / saved.sigma2 + alpha)) * rho, layer.cg_backward)
                     : cg_solve(s, rho, layer.cg_backward);
  const Tensor& g = adj.x;

  NnlsGradients out;
  out.report = std::move(adj.report);
  out.d_beta = alpha * (dot(*saved.x_prev, g) - dot(x_star, g));
  out.d_x_prev = alpha * g;

  const Tensor& w = saved.weights->weights();
  Tensor gx = reg.apply(x_star);
  Tensor gg = reg.apply(g);
  out.d_weights = Tensor(w.shape());
  for (std::size_t i = 0; i < w.size(); ++i) out.d_weights[i] = -gx[i] * gg[i];

  // -d/dG <g, G^T W G x*> = -(dG(x*; W Gg) + dG(g; W Gx*))
  for (std::size_t i = 0; i < w.size(); ++i) {
    gx[i] *= w[i];
    gg[i] *= w[i];
  }
  out.d_filters = reg.filter_grad(x_star, gg);
  out.d_filters += reg.filter_grad(g, gx);
  out.d_filters *= -1.0;
  return out;
}

Tensor wiener_start(const BlurOperator& blur, const Tensor& y) {
  double l1 = 0.0;
  for (double v : blur.kernel().taps().values()) l1 += std::abs(v);
  Tensor x0 = blur.adjoint(y);
  x0 *= 1.0 / (l1 * l1);
  return x0;
}

LayerForward wiener_forward(const WienerLayer& layer, const BlurOperator& blur, const Tensor& y, double sigma2) {
  if (!(sigma2 > 0.0)) throw ParameterError("wiener_forward: sigma2 must be positive");
  const FilterBank bank(layer.filters, blur.input_shape());
  const WienerOperator a(blur, bank, sigma2);
  const Tensor rhs = blur.adjoint(y);
  CgResult solved = cg_solve(a, rhs, wiener_start(blur, y), layer.cg_forward);
  LayerForward out;
  out.x = std::make_shared<const Tensor>(std::move(solved.x));
  out.report = std::move(solved.report);
  out.saved.x_star = out.x;
  out.saved.blur.emplace(blur);
  out.saved.filters = layer.filters;
  out.saved.sigma2 = sigma2;
  return out;
}

WienerGradients wiener_backward(const WienerLayer& layer, const SavedForward& saved, const Tensor& rho) {
  if (!saved.x_star || !saved.blur) throw ParameterError("wiener_backward: incomplete saved forward state");
  const Tensor& x_star = *saved.x_star;
  require_same_shape(x_star, rho, "wiener_backward");
  const FilterBank bank(saved.filters, x_star.shape());
  const WienerOperator a(*saved.blur, bank, saved.sigma2);
  CgResult adj = cg_solve(a, rho, layer.cg_backward);
  const Tensor& g = adj.x;

  WienerGradients out;
  out.report = std::move(adj.report);
  out.d_filters = bank.filter_grad(x_star, bank.apply(g));
  out.d_filters += bank.filter_grad(g, bank.apply(x_star));
  out.d_filters *= -saved.sigma2;
  return out;
}

}  // namespace rlsd
