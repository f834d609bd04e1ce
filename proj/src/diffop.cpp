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

#include "rlsd/diffop.hpp"

#include <cmath>

#include "rlsd/errors.hpp"
#include "rlsd/linop.hpp"

namespace rlsd {

void ParamSet::add(const std::string& name, Tensor value) {
  if (!params_.emplace(name, std::move(value)).second) throw ParameterError("duplicate parameter '" + name + "'");
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ParameterError("unknown parameter '" + name + "'");
  return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ParameterError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamSet::total_size() const noexcept {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& [name, t] : params_) out.add(name, Tensor(t.shape()));
  return out;
}

void ParamSet::set_zero() {
  for (auto& [name, t] : params_)
    for (double& v : t.values()) v = 0.0;
}

void ParamSet::accumulate(const ParamSet& other, double scale) {
  for (const auto& [name, g] : other.params_) {
    Tensor& dst = at(name);
    require_same_shape(dst, g, name.c_str());
    axpy(scale, g, dst);
  }
}

void ParamSet::accumulate(const std::string& name, const Tensor& g) {
  Tensor& dst = at(name);
  require_same_shape(dst, g, name.c_str());
  dst += g;
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto& [name, t] : params_) out.insert(out.end(), t.values().begin(), t.values().end());
  return out;
}

void ParamSet::assign_flat(std::span<const double> values) {
  if (values.size() != total_size()) throw DimensionError("assign_flat: length mismatch");
  std::size_t offset = 0;
  for (auto& [name, t] : params_) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.data());
    offset += t.size();
  }
}

ConvBankVjp conv_bank_vjp(const Tensor& filters, const Tensor& x, const Tensor& cotangent) {
  const FilterBank bank(filters, as_image(x).shape());
  const Tensor img = as_image(x);
  ConvBankVjp out{bank.filter_grad(img, cotangent), bank.adjoint(cotangent)};
  if (x.rank() == 2) out.d_x = out.d_x.reshaped(x.shape());
  return out;
}

DiagWeightVjp diag_weight_vjp(const Tensor& w, const Tensor& x, const Tensor& cotangent) {
  require_same_shape(w, x, "diag_weight_vjp");
  require_same_shape(w, cotangent, "diag_weight_vjp");
  DiagWeightVjp out{Tensor(w.shape()), Tensor(w.shape())};
  for (std::size_t i = 0; i < w.size(); ++i) {
    out.d_w[i] = x[i] * cotangent[i];
    out.d_x[i] = w[i] * cotangent[i];
  }
  return out;
}

double alpha_vjp(double beta, const Tensor& x, const Tensor& cotangent) { return std::exp(beta) * dot(x, cotangent); }

Tensor ConvBankOp::forward(const ParamSet& params, const Tensor& x) const {
  const Tensor img = as_image(x);
  return FilterBank(params.at(name_), img.shape()).apply(img);
}

DiffOperator::Vjp ConvBankOp::vjp(const ParamSet& params, const Tensor& x, const Tensor& cotangent) const {
  auto [d_filters, d_x] = conv_bank_vjp(params.at(name_), x, cotangent);
  Vjp out;
  out.d_params.add(name_, std::move(d_filters));
  out.d_x = std::move(d_x);
  return out;
}

Tensor DiagWeightOp::forward(const ParamSet& params, const Tensor& x) const {
  const Tensor& w = params.at(name_);
  require_same_shape(w, x, "DiagWeightOp");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= w[i];
  return out;
}

DiffOperator::Vjp DiagWeightOp::vjp(const ParamSet& params, const Tensor& x, const Tensor& cotangent) const {
  auto [d_w, d_x] = diag_weight_vjp(params.at(name_), x, cotangent);
  Vjp out;
  out.d_params.add(name_, std::move(d_w));
  out.d_x = std::move(d_x);
  return out;
}

Tensor AlphaScaleOp::forward(const ParamSet& params, const Tensor& x) const {
  return std::exp(params.at(name_)[0]) * x;
}

DiffOperator::Vjp AlphaScaleOp::vjp(const ParamSet& params, const Tensor& x, const Tensor& cotangent) const {
  const double beta = params.at(name_)[0];
  Vjp out;
  out.d_params.add(name_, Tensor({1}, std::vector<double>{alpha_vjp(beta, x, cotangent)}));
  out.d_x = std::exp(beta) * cotangent;
  return out;
}

Tensor ChainOp::forward(const ParamSet& params, const Tensor& x) const {
  return second_->forward(params, first_->forward(params, x));
}

DiffOperator::Vjp ChainOp::vjp(const ParamSet& params, const Tensor& x, const Tensor& cotangent) const {
  const Tensor mid = first_->forward(params, x);
  Vjp outer = second_->vjp(params, mid, cotangent);
  Vjp inner = first_->vjp(params, x, outer.d_x);
  for (auto& [name, g] : outer.d_params) {
    if (inner.d_params.contains(name)) {
      inner.d_params.at(name) += g;
    } else {
      inner.d_params.add(name, std::move(g));
    }
  }
  return inner;
}

}  // namespace rlsd
