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

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "rlsd/tensor.hpp"

namespace rlsd {

// Named learnable tensors. Iteration order is the lexicographic name order,
// which keeps flattening and gradient merges deterministic.
class ParamSet {
 public:
  using Map = std::map<std::string, Tensor>;

  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  std::size_t count() const noexcept { return params_.size(); }
  std::size_t total_size() const noexcept;

  Map::iterator begin() { return params_.begin(); }
  Map::iterator end() { return params_.end(); }
  Map::const_iterator begin() const { return params_.begin(); }
  Map::const_iterator end() const { return params_.end(); }

  // Same names and shapes, all zeros.
  ParamSet zeros_like() const;
  void set_zero();
  // this[name] += scale * other[name] for every entry of `other`.
  void accumulate(const ParamSet& other, double scale = 1.0);
  // this[name] += g; the entry must already exist.
  void accumulate(const std::string& name, const Tensor& g);

  std::vector<double> flatten() const;
  void assign_flat(std::span<const double> values);

 private:
  Map params_;
};

struct ConvBankVjp {
  Tensor d_filters;
  Tensor d_x;
};

// Cotangent pullback of z = G(filters) x for a valid filter bank.
ConvBankVjp conv_bank_vjp(const Tensor& filters, const Tensor& x, const Tensor& cotangent);

struct DiagWeightVjp {
  Tensor d_w;
  Tensor d_x;
};

// Pullback of z = w (.) x.
DiagWeightVjp diag_weight_vjp(const Tensor& w, const Tensor& x, const Tensor& cotangent);

// Pullback of z = exp(beta) x with respect to beta.
double alpha_vjp(double beta, const Tensor& x, const Tensor& cotangent);

// A parameterized map with a hand-written vector-Jacobian product.
class DiffOperator {
 public:
  struct Vjp {
    ParamSet d_params;
    Tensor d_x;
  };

  virtual ~DiffOperator() = default;
  virtual Tensor forward(const ParamSet& params, const Tensor& x) const = 0;
  virtual Vjp vjp(const ParamSet& params, const Tensor& x, const Tensor& cotangent) const = 0;
};

// x -> G x with G read from params[name].
class ConvBankOp final : public DiffOperator {
 public:
  explicit ConvBankOp(std::string name) : name_(std::move(name)) {}
  Tensor forward(const ParamSet& params, const Tensor& x) const override;
  Vjp vjp(const ParamSet& params, const Tensor& x, const Tensor& cotangent) const override;

 private:
  std::string name_;
};

// z -> params[name] (.) z
class DiagWeightOp final : public DiffOperator {
 public:
  explicit DiagWeightOp(std::string name) : name_(std::move(name)) {}
  Tensor forward(const ParamSet& params, const Tensor& x) const override;
  Vjp vjp(const ParamSet& params, const Tensor& x, const Tensor& cotangent) const override;

 private:
  std::string name_;
};

// x -> exp(params[name][0]) x
class AlphaScaleOp final : public DiffOperator {
 public:
  explicit AlphaScaleOp(std::string name) : name_(std::move(name)) {}
  Tensor forward(const ParamSet& params, const Tensor& x) const override;
  Vjp vjp(const ParamSet& params, const Tensor& x, const Tensor& cotangent) const override;

 private:
  std::string name_;
};

// second(first(x)); parameter cotangents from both stages are summed.
class ChainOp final : public DiffOperator {
 public:
  ChainOp(std::shared_ptr<const DiffOperator> first, std::shared_ptr<const DiffOperator> second)
      : first_(std::move(first)), second_(std::move(second)) {}
  Tensor forward(const ParamSet& params, const Tensor& x) const override;
  Vjp vjp(const ParamSet& params, const Tensor& x, const Tensor& cotangent) const override;

 private:
  std::shared_ptr<const DiffOperator> first_, second_;
};

}  // namespace rlsd
