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

#include <span>
#include <vector>

#include "rlsd/linop.hpp"

namespace rlsd {

struct CgConfig {
  int max_iters = 250;
  double rel_tol = 1e-3;
  bool record_history = false;

  // Throws ParameterError unless max_iters >= 1 and rel_tol in (0, 1).
  void validate() const;
};

inline constexpr CgConfig kForwardCg{250, 1e-3, false};
inline constexpr CgConfig kBackwardCg{500, 1e-3, false};

struct CgReport {
  int iterations = 0;
  double final_rel_residual = 0.0;
  bool converged = false;
  // Relative residual before the first iteration and after each one.
  std::vector<double> residual_history;
};

struct CgResult {
  Tensor x;
  CgReport report;
};

// Conjugate gradient for a symmetric positive definite operator. Stops when
// ||b - Ax|| <= rel_tol * ||b||; otherwise returns the lowest-residual
// iterate seen within max_iters with converged = false.
// Throws NumericalError if <p, Ap> <= 0 or a non-finite value shows up.
CgResult cg_solve(const LinearMap& a, const Tensor& b, const Tensor& x0, const CgConfig& cfg);
CgResult cg_solve(const LinearMap& a, const Tensor& b, const CgConfig& cfg);

// Lockstep CG over independent systems. Iteration stops only once every
// element meets the tolerance (or max_iters is hit), so all elements report
// the same iteration count.
std::vector<CgResult> cg_solve_batch(std::span<const LinearMap* const> ops, std::span<const Tensor> rhs,
                                     std::span<const Tensor> x0, const CgConfig& cfg);

}  // namespace rlsd
