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

#include "rlsd/cg.hpp"

#include <cmath>
#include <string>

#include "rlsd/errors.hpp"

namespace rlsd {

void CgConfig::validate() const {
  if (max_iters < 1) throw ParameterError("CG max_iters must be >= 1");
  if (!(rel_tol > 0.0 && rel_tol < 1.0)) throw ParameterError("CG rel_tol must lie in (0, 1)");
}

namespace {

// One CG system's running state.
struct CgState {
  Tensor x, r, p, best;
  double rr = 0.0;
  double b_norm = 0.0;
  double best_rel = 0.0;
  bool done = false;
  CgReport report;

  double rel() const { return b_norm > 0.0 ? std::sqrt(rr) / b_norm : 0.0; }
};

CgState start(const LinearMap& a, const Tensor& b, Tensor x0, const CgConfig& cfg) {
  if (b.shape() != a.output_shape() || x0.shape() != a.input_shape()) {
    throw DimensionError("cg_solve: rhs " + shape_string(b.shape()) + " / start " + shape_string(x0.shape()) +
                         " do not fit operator " + shape_string(a.input_shape()));
  }
  if (!all_finite(b) || !all_finite(x0)) throw NumericalError("cg_solve: non-finite right-hand side or start");
  CgState s;
  s.b_norm = norm2(b);
  s.x = std::move(x0);
  if (s.b_norm == 0.0) {
    s.x = zeros_like(b);
    s.done = true;
    s.report.converged = true;
    if (cfg.record_history) s.report.residual_history.push_back(0.0);
    return s;
  }
  s.r = b - a.apply(s.x);
  s.rr = dot(s.r, s.r);
  s.best_rel = s.rel();
  s.report.final_rel_residual = s.best_rel;
  if (cfg.record_history) s.report.residual_history.push_back(s.best_rel);
  s.p = s.r;
  if (s.best_rel <= cfg.rel_tol) {
    s.done = true;
    s.report.converged = true;
  }
  return s;
}

// Advances one iteration; returns true once the tolerance is met.
bool step(const LinearMap& a, CgState& s, const CgConfig& cfg) {
  const Tensor ap = a.apply(s.p);
  const double pap = dot(s.p, ap);
  if (!std::isfinite(pap) || pap <= 0.0) {
    throw NumericalError("cg_solve: breakdown, <p, Ap> = " + std::to_string(pap) +
                         " (operator not positive definite?)");
  }
  const double step_len = s.rr / pap;
  const bool was_best = s.best.empty();
  axpy(step_len, s.p, s.x);
  axpy(-step_len, ap, s.r);
  const double rr_new = dot(s.r, s.r);
  if (!std::isfinite(rr_new)) throw NumericalError("cg_solve: non-finite residual");
  ++s.report.iterations;
  const double beta = rr_new / s.rr;
  s.rr = rr_new;
  const double rel = s.rel();
  if (cfg.record_history) s.report.residual_history.push_back(rel);
  s.report.final_rel_residual = rel;

  if (rel < s.best_rel) {
    s.best_rel = rel;
    s.best = Tensor();
  } else if (was_best) {
    // Residual went up: keep the previous iterate as the best so far.
    s.best = s.x;
    axpy(-step_len, s.p, s.best);
  }
  s.p *= beta;
  s.p += s.r;
  if (rel <= cfg.rel_tol) {
    s.report.converged = true;
    return true;
  }
  return false;
}

CgResult finish(CgState& s) {
  if (!s.report.converged && !s.best.empty() && s.best_rel < s.report.final_rel_residual) {
    s.x = std::move(s.best);
    s.report.final_rel_residual = s.best_rel;
  }
  return {std::move(s.x), std::move(s.report)};
}

}  // namespace

CgResult cg_solve(const LinearMap& a, const Tensor& b, const Tensor& x0, const CgConfig& cfg) {
  cfg.validate();
  CgState s = start(a, b, x0, cfg);
  while (!s.done && s.report.iterations < cfg.max_iters) s.done = step(a, s, cfg);
  return finish(s);
}

CgResult cg_solve(const LinearMap& a, const Tensor& b, const CgConfig& cfg) {
  return cg_solve(a, b, Tensor(a.input_shape()), cfg);
}

std::vector<CgResult> cg_solve_batch(std::span<const LinearMap* const> ops, std::span<const Tensor> rhs,
                                     std::span<const Tensor> x0, const CgConfig& cfg) {
  cfg.validate();
  if (ops.size() != rhs.size() || ops.size() != x0.size()) throw DimensionError("cg_solve_batch: batch sizes differ");
  std::vector<CgState> states;
  states.reserve(ops.size());
  for (std::size_t i = 0; i < ops.size(); ++i) states.push_back(start(*ops[i], rhs[i], x0[i], cfg));

  auto all_met = [&] {
    for (const auto& s : states)
      if (!s.report.converged) return false;
    return true;
  };
  int iter = 0;
  while (!all_met() && iter < cfg.max_iters) {
    ++iter;
    for (std::size_t i = 0; i < states.size(); ++i) {
      CgState& s = states[i];
      // An exactly solved element has nothing left to do.
      if (s.b_norm == 0.0 || s.rr == 0.0) continue;
      if (s.report.converged) {
        // Keep iterating already-converged elements, as the batch does.
        s.report.converged = false;
        step(*ops[i], s, cfg);
        s.report.converged = s.report.final_rel_residual <= cfg.rel_tol;
      } else {
        step(*ops[i], s, cfg);
      }
    }
  }
  std::vector<CgResult> out;
  out.reserve(states.size());
  for (auto& s : states) {
    s.report.iterations = iter;
    out.push_back(finish(s));
  }
  return out;
}

}  // namespace rlsd
