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

#include <memory>
#include <optional>

#include "rlsd/cg.hpp"
#include "rlsd/linop.hpp"

namespace rlsd {

// One reweighted least-squares step. Its output x satisfies
//   S x = (1/sigma2) H^T y + alpha x_prev,
//   S   = (1/sigma2) H^T H + G^T W G + alpha I,   alpha = exp(beta).
// "NNLS" refers to the nonnegative weights W; x itself is unconstrained.
struct NnlsLayer {
  Tensor reg_filters;  // G, F x C x kh x kw
  double beta = 0.0;
  CgConfig cg_forward = kForwardCg;
  CgConfig cg_backward = kBackwardCg;
  // Start the adjoint solve from rho / (1/sigma2 + alpha) instead of zero.
  bool warm_start_backward = false;
};

// Initialization layer: x = (H^T H + sigma2 G_w^T G_w)^{-1} H^T y.
struct WienerLayer {
  Tensor filters;  // G_w, Fw x C x kh x kw
  CgConfig cg_forward = kForwardCg;
  CgConfig cg_backward = kBackwardCg;
};

// Everything the implicit backward pass needs. Holds one image-sized
// solution (shared with the caller, not copied) plus the weights and
// features, whatever the number of CG iterations the forward solve took.
struct SavedForward {
  std::shared_ptr<const Tensor> x_star;
  std::shared_ptr<const Tensor> x_prev;  // null for the Wiener layer
  std::optional<DiagonalWeights> weights;
  Tensor features;  // G x_prev, the predictor input (set by the caller)
  std::optional<BlurOperator> blur;
  Tensor filters;
  double beta = 0.0;
  double sigma2 = 0.0;

  // Bytes held by buffers this record owns (x_star and x_prev excluded:
  // they are the layers' outputs).
  std::size_t owned_bytes() const noexcept;
};

struct LayerForward {
  std::shared_ptr<const Tensor> x;
  SavedForward saved;
  CgReport report;
};

LayerForward nnls_forward(const NnlsLayer& layer, const BlurOperator& blur, const Tensor& y,
                          std::shared_ptr<const Tensor> x_prev, DiagonalWeights weights, double sigma2);

struct NnlsGradients {
  Tensor d_filters;  // through S only; the predictor path is the caller's
  double d_beta = 0.0;
  Tensor d_x_prev;   // alpha * g
  Tensor d_weights;  // -(G x*) (.) (G g)
  CgReport report;
};

// Implicit backward: solves S g = rho (S is symmetric) and pulls g back
// through the residual r = b(w) - A(w) x*.
NnlsGradients nnls_backward(const NnlsLayer& layer, const SavedForward& saved, const Tensor& rho);

LayerForward wiener_forward(const WienerLayer& layer, const BlurOperator& blur, const Tensor& y, double sigma2);

// Cold start used by the Wiener solve: H^T y / ||k||_1^2.
Tensor wiener_start(const BlurOperator& blur, const Tensor& y);

struct WienerGradients {
  Tensor d_filters;
  CgReport report;
};

WienerGradients wiener_backward(const WienerLayer& layer, const SavedForward& saved, const Tensor& rho);

}  // namespace rlsd
