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

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rlsd/cg.hpp"
#include "rlsd/diffop.hpp"
#include "rlsd/implicit_layer.hpp"
#include "rlsd/linop.hpp"
#include "rlsd/predictor.hpp"

namespace rlsd {

enum class RegInit {
  kGradientDct,  // two finite differences, then low-frequency DCT atoms
  kGradient,     // exactly the two finite differences (F must be 2)
};

struct ModelConfig {
  std::size_t channels = 1;
  std::size_t reg_filters = 16;
  std::size_t reg_size = 5;
  std::size_t wiener_filters = 8;
  std::size_t wiener_size = 5;
  // Adaptive steps after the Wiener step; 0 gives a Wiener-only model.
  std::size_t steps = 4;
  // One (G, predictor) for all adaptive steps; otherwise one per step.
  bool share_weights = true;
  // One beta for all steps; otherwise one per step (the default).
  bool share_beta = false;
  // Rescale every G filter to unit 2-norm after each optimizer step.
  bool normalize_reg = true;
  RegInit reg_init = RegInit::kGradientDct;

  WeightPredictor predictor = ConvPredictor{};

  double init_beta = 0.0;
  double init_reg_scale = 1.0;
  double init_wiener_scale = 4.0;
  double init_log_gain = 1.5;
  // relu(v) at init for the two gradient channels and for the rest.
  double init_gradient_bias = 1.0;
  double init_other_bias = 0.05;

  CgConfig cg_forward = kForwardCg;
  CgConfig cg_backward = kBackwardCg;
  bool warm_start_backward = false;

  void validate() const;
  // Stable text form of the architecture, hashed into checkpoints.
  std::string canonical() const;
};

std::uint64_t fnv1a64(const std::string& text) noexcept;

// Per-step diagnostics. Index 0 is the Wiener step.
struct StepTrace {
  std::vector<std::shared_ptr<const Tensor>> outputs;
  std::vector<double> psnr;  // NaN without ground truth
  // ||x_i - x_{i-1}|| / ||x_i||; for the Wiener step x_0 is its CG start.
  std::vector<double> tol;
  std::vector<int> cg_iterations;
  std::vector<double> cg_residual;
  std::vector<bool> cg_converged;

  std::size_t size() const noexcept { return tol.size(); }
  int total_cg_iterations() const noexcept;
};

std::string to_json(const StepTrace& trace);

// A degraded observation together with what produced it.
struct Sample {
  Tensor x_gt;  // latent, C x H x W
  Tensor y;     // observation, C x (H-kh+1) x (W-kw+1)
  BlurKernel kernel;
  double sigma = 0.0;
};

// Part of a latent-sized image that the observation covers.
Tensor observed_region(const Tensor& latent, const BlurKernel& kernel, const Shape& observation_shape);

struct LossTerms {
  double loss = 0.0;
  std::vector<double> step_mse;
  std::vector<Tensor> cotangents;  // dL/dx_k
};

// L = sum_k ||x_k - x_gt||^2 / N over every traced step.
LossTerms loss_sum_mse(const StepTrace& trace, const Tensor& x_gt);
// Same sum restricted to the observed window: N counts only its pixels and
// the cotangents vanish on the boundary band.
LossTerms loss_sum_mse(const StepTrace& trace, const Tensor& x_gt, const BlurKernel& kernel,
                       const Shape& observation_shape);

// Latent pixels the training loss covers.
enum class LossRegion { kLatent, kObserved };
std::string to_string(LossRegion region);
LossRegion loss_region_from_string(const std::string& s);

class RlsdnModel {
 public:
  RlsdnModel(ModelConfig cfg, ParamSet params);

  // Fresh parameters: gradient/DCT filter banks, seeded predictor weights.
  static RlsdnModel initialize(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return cfg_; }
  ModelConfig& config() noexcept { return cfg_; }
  const ParamSet& params() const noexcept { return params_; }
  ParamSet& params() noexcept { return params_; }

  std::string reg_name(std::size_t step) const;
  std::string predictor_prefix(std::size_t step) const;
  std::size_t beta_index(std::size_t step) const;
  WeightPredictor predictor_for(std::size_t step) const;

  struct Restored {
    Tensor x;
    StepTrace trace;
  };

  // Wiener step, then (total_steps - 1) adaptive steps; total_steps
  // defaults to config().steps + 1. Steps past the trained ones reuse the
  // last step's parameters. Ground truth, when given, fills trace.psnr on
  // the observed region.
  Restored restore(const Tensor& y, const BlurKernel& kernel, double sigma,
                   std::optional<std::size_t> total_steps = std::nullopt,
                   const Tensor* ground_truth = nullptr) const;

  struct Gradient {
    LossTerms loss;
    ParamSet grads;
    StepTrace trace;
    int backward_cg_iterations = 0;
  };

  // loss_sum_mse over the default step count and its exact implicit gradient.
  Gradient loss_and_gradient(const Sample& sample, LossRegion region = LossRegion::kLatent) const;

  // Applies the configured projection (unit-norm G filters).
  void project();

 private:
  ModelConfig cfg_;
  ParamSet params_;
};

struct ConvergenceRow {
  std::size_t steps = 0;
  int cg_cap = 0;
  double psnr = 0.0;
  double mean_cg_iters = 0.0;
};

// Mean PSNR and mean cumulative CG iterations after each step count, for
// every forward CG cap.
std::vector<ConvergenceRow> convergence_study(const RlsdnModel& model, const std::vector<Sample>& dataset,
                                              const std::vector<std::size_t>& step_counts,
                                              const std::vector<int>& cg_caps);

// "steps,cg_cap,psnr,mean_cg_iters" followed by one line per row.
std::string convergence_csv(const std::vector<ConvergenceRow>& rows);

}  // namespace rlsd
