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

#include <doctest.h>

#include <memory>

#include "oracles.hpp"
#include "rlsd/diffop.hpp"
#include "rlsd/errors.hpp"

using namespace rlsd;

namespace {

// Checks an operator's VJP against central differences of <forward, c>
// along random directions in parameter and input space.
void check_vjp(const DiffOperator& op, ParamSet params, const Tensor& x, Rng& rng, double tol) {
  for (int probe = 0; probe < 20; ++probe) {
    const Tensor c = oracle::random_tensor(rng, op.forward(params, x).shape());
    const DiffOperator::Vjp v = op.vjp(params, x, c);

    const std::vector<double> p0 = params.flatten();
    Tensor dp({p0.size()});
    for (double& e : dp.values()) e = rng.uniform(-1.0, 1.0);
    double scale = 0.0;
    for (double e : p0) scale = std::max(scale, std::abs(e));
    const double h = 1e-5 * std::max(1.0, scale);
    auto along_params = [&](const Tensor& flat) {
      ParamSet q = params;
      q.assign_flat(flat.values());
      return dot(op.forward(q, x), c);
    };
    const double fd_p = oracle::directional_difference(along_params, Tensor({p0.size()}, p0), dp, h);
    const std::vector<double> g = v.d_params.flatten();
    double an_p = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) an_p += g[i] * dp[i];
    CHECK(oracle::rel_err(an_p, fd_p) <= tol);

    const Tensor dx = oracle::random_tensor(rng, x.shape());
    auto along_x = [&](const Tensor& xx) { return dot(op.forward(params, xx), c); };
    const double fd_x = oracle::directional_difference(along_x, x, dx, 1e-5);
    CHECK(oracle::rel_err(dot(v.d_x, dx), fd_x) <= tol);
  }
}

}  // namespace

TEST_CASE("param set bookkeeping") {
  ParamSet p;
  p.add("b", Tensor({2}, 1.0));
  p.add("a", Tensor({1, 3}, 2.0));
  CHECK(p.count() == 2);
  CHECK(p.total_size() == 5);
  CHECK_THROWS_AS(p.add("a", Tensor({1})), ParameterError);
  CHECK_THROWS_AS(p.at("missing"), ParameterError);
  const std::vector<double> flat = p.flatten();
  CHECK(flat == std::vector<double>{2, 2, 2, 1, 1});
  ParamSet z = p.zeros_like();
  z.accumulate(p, 0.5);
  CHECK(z.at("a")[0] == 1.0);
  z.accumulate("b", Tensor({2}, 3.0));
  CHECK(z.at("b")[1] == 3.5);
  z.set_zero();
  CHECK(norm2(z.at("b")) == 0.0);
  std::vector<double> nv{9, 8, 7, 6, 5};
  p.assign_flat(nv);
  CHECK(p.at("b")[1] == 5.0);
}

TEST_CASE("conv_bank_vjp closed forms") {
  const Tensor f({1, 1, 1, 1}, 2.5);
  const Tensor x({1, 1, 1}, -1.5);
  const Tensor c({1, 1, 1}, 0.75);
  const ConvBankVjp v = conv_bank_vjp(f, x, c);
  CHECK(v.d_filters[0] == doctest::Approx(-1.5 * 0.75));
  CHECK(v.d_x[0] == doctest::Approx(2.5 * 0.75));

  Rng rng(30);
  const Tensor ff = oracle::random_tensor(rng, {2, 1, 3, 3});
  const Tensor xx = oracle::random_tensor(rng, {1, 8, 8});
  const ConvBankVjp zero = conv_bank_vjp(ff, xx, Tensor({2, 6, 6}));
  CHECK(norm2(zero.d_filters) == 0.0);
  CHECK(norm2(zero.d_x) == 0.0);
}

TEST_CASE("conv_bank_vjp matches central differences") {
  Rng rng(31);
  const Tensor f = oracle::random_tensor(rng, {2, 1, 3, 3});
  const Tensor x = oracle::random_tensor(rng, {8, 8});
  const Tensor c = oracle::random_tensor(rng, {2, 6, 6});
  const ConvBankVjp v = conv_bank_vjp(f, x, c);
  auto of_f = [&](const Tensor& ff) { return dot(ConvBankOp("g").forward([&] { ParamSet p; p.add("g", ff); return p; }(), x), c); };
  for (std::size_t i = 0; i < f.size(); ++i)
    CHECK(oracle::rel_err(v.d_filters[i], oracle::central_difference(of_f, f, i, 1e-5)) <= 1e-6);
  ParamSet p;
  p.add("g", f);
  auto of_x = [&](const Tensor& xx) { return dot(ConvBankOp("g").forward(p, xx), c); };
  REQUIRE(v.d_x.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(oracle::rel_err(v.d_x[i], oracle::central_difference(of_x, x, i, 1e-5)) <= 1e-6);
}

TEST_CASE("diag_weight_vjp") {
  Rng rng(32);
  const Tensor x = oracle::random_tensor(rng, {3, 4});
  const Tensor c = oracle::random_tensor(rng, {3, 4});
  const DiagWeightVjp ones = diag_weight_vjp(Tensor({3, 4}, 1.0), x, c);
  CHECK(oracle::rel_err(ones.d_x, c) == 0.0);
  const DiagWeightVjp at_zero = diag_weight_vjp(oracle::random_tensor(rng, {3, 4}), Tensor({3, 4}), c);
  CHECK(norm2(at_zero.d_w) == 0.0);

  const Tensor w = oracle::random_tensor(rng, {3, 4}, 0.0, 2.0);
  const DiagWeightVjp v = diag_weight_vjp(w, x, c);
  ParamSet p;
  p.add("w", w);
  auto of_w = [&](const Tensor& ww) {
    ParamSet q;
    q.add("w", ww);
    return dot(DiagWeightOp("w").forward(q, x), c);
  };
  for (std::size_t i = 0; i < w.size(); ++i)
    CHECK(oracle::rel_err(v.d_w[i], oracle::central_difference(of_w, w, i, 1e-5)) <= 1e-6);
}

TEST_CASE("alpha_vjp") {
  Tensor x({2}, std::vector<double>{1.0, 0.0});
  Tensor perp({2}, std::vector<double>{0.0, 3.0});
  CHECK(alpha_vjp(0.7, x, perp) == 0.0);
  CHECK(alpha_vjp(0.0, x, x) == doctest::Approx(1.0));

  Rng rng(33);
  const Tensor xr = oracle::random_tensor(rng, {10});
  const Tensor cr = oracle::random_tensor(rng, {10});
  const double beta = -0.4;
  auto f = [&](const Tensor& b) { return std::exp(b[0]) * dot(xr, cr); };
  const double fd = oracle::central_difference(f, Tensor({1}, beta), 0, 1e-5);
  CHECK(oracle::rel_err(alpha_vjp(beta, xr, cr), fd) <= 1e-8);
}

TEST_CASE("every operator passes the randomized VJP probe") {
  Rng rng(34);
  {
    ParamSet p;
    p.add("g", oracle::random_tensor(rng, {3, 2, 3, 3}));
    check_vjp(ConvBankOp("g"), p, oracle::random_tensor(rng, {2, 7, 9}), rng, 1e-5);
  }
  {
    ParamSet p;
    p.add("w", oracle::random_tensor(rng, {2, 5, 5}, 0.0, 1.0));
    check_vjp(DiagWeightOp("w"), p, oracle::random_tensor(rng, {2, 5, 5}), rng, 1e-5);
  }
  {
    ParamSet p;
    p.add("beta", Tensor({1}, 0.3));
    check_vjp(AlphaScaleOp("beta"), p, oracle::random_tensor(rng, {1, 4, 4}), rng, 1e-5);
  }
}

TEST_CASE("chained VJP equals the composed finite differences") {
  Rng rng(35);
  ParamSet p;
  p.add("g", oracle::random_tensor(rng, {2, 1, 3, 3}));
  p.add("w", oracle::random_tensor(rng, {2, 6, 6}, 0.0, 1.0));
  p.add("beta", Tensor({1}, -0.2));
  auto conv = std::make_shared<ConvBankOp>("g");
  auto diag = std::make_shared<DiagWeightOp>("w");
  auto alpha = std::make_shared<AlphaScaleOp>("beta");
  const ChainOp chain(std::make_shared<ChainOp>(conv, diag), alpha);
  check_vjp(chain, p, oracle::random_tensor(rng, {1, 8, 8}), rng, 1e-5);
}
