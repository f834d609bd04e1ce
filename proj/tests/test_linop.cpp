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

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "rlsd/errors.hpp"
#include "rlsd/linop.hpp"

using namespace rlsd;

namespace {

BlurKernel random_kernel(Rng& rng, std::size_t kh, std::size_t kw) {
  return BlurKernel::from_psf(oracle::random_tensor(rng, {kh, kw}, 0.0, 1.0));
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("rlsd_test_" + name);
}

}  // namespace

TEST_CASE("blur with a delta kernel is a centered crop") {
  Rng rng(10);
  const Tensor x = oracle::random_tensor(rng, {2, 9, 11});
  const BlurOperator h(BlurKernel::delta(5), x.shape());
  CHECK(h.output_shape() == Shape{2, 5, 7});
  CHECK(oracle::rel_err(h.apply(x), crop(x, 2, 2, 5, 7)) == 0.0);
}

TEST_CASE("blur preserves constants") {
  Rng rng(11);
  const BlurOperator h(random_kernel(rng, 5, 3), {1, 12, 12});
  const Tensor y = h.apply(Tensor({1, 12, 12}, 0.37));
  for (double v : y.values()) CHECK(v == doctest::Approx(0.37).epsilon(1e-14));
}

TEST_CASE("blur is true convolution with the PSF") {
  Rng rng(12);
  const Tensor psf = oracle::random_tensor(rng, {5, 5}, 0.0, 1.0);
  const BlurKernel k = BlurKernel::from_psf(psf);
  const Tensor psf_n = k.to_psf();
  const Tensor x = oracle::random_tensor(rng, {1, 16, 16});
  const BlurOperator h(k, x.shape());
  const oracle::Mat dense = oracle::convolution_matrix(psf_n, 16, 16);
  CHECK(oracle::rel_err(oracle::vec(h.apply(x)), dense * oracle::vec(x)) <= 1e-12);
  const Tensor g = oracle::random_tensor(rng, {1, 12, 12});
  CHECK(oracle::rel_err(oracle::vec(h.adjoint(g)), dense.transpose() * oracle::vec(g)) <= 1e-12);
}

TEST_CASE("kernel normalization and validation") {
  Tensor psf({3, 3}, 2.0);
  const BlurKernel k = BlurKernel::from_psf(psf);
  CHECK(sum(k.taps()) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(k.applied_scale() == doctest::Approx(1.0 / 18.0));
  psf[0] = -1.0;
  CHECK_THROWS_AS(BlurKernel::from_psf(psf), ParameterError);
  CHECK_THROWS_AS(BlurKernel::from_psf(Tensor({2, 2})), ParameterError);
  CHECK_THROWS_AS(BlurKernel::delta(4), ParameterError);
}

TEST_CASE("kernel files round-trip bit-exactly") {
  Rng rng(13);
  const BlurKernel k = random_kernel(rng, 7, 5);
  const auto p1 = temp_path("k1.txt"), p2 = temp_path("k2.txt");
  save_kernel(p1, k);
  const BlurKernel back = load_kernel(p1);
  CHECK(oracle::rel_err(back.taps(), k.taps()) == 0.0);
  save_kernel(p2, back);
  std::ifstream a(p1), b(p2);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
  CHECK(sa == sb);
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("missing kernel file names the path") {
  const auto p = temp_path("does_not_exist.txt");
  try {
    load_kernel(p);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find(p.string()) != std::string::npos);
  }
}

TEST_CASE("filter bank matches the dense oracle and its adjoint") {
  Rng rng(14);
  const Tensor filters = oracle::random_tensor(rng, {3, 2, 3, 2});
  const Tensor x = oracle::random_tensor(rng, {2, 8, 7});
  const FilterBank g(filters, x.shape());
  CHECK(g.output_shape() == Shape{3, 6, 6});
  const oracle::Mat dense = oracle::bank_matrix(filters, 8, 7);
  CHECK(oracle::rel_err(oracle::vec(g.apply(x)), dense * oracle::vec(x)) <= 1e-12);
  const Tensor z = oracle::random_tensor(rng, g.output_shape());
  CHECK(oracle::rel_err(oracle::vec(g.adjoint(z)), dense.transpose() * oracle::vec(z)) <= 1e-12);
}

TEST_CASE("filter bank adjoint identity on random instances") {
  Rng rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 1 + rng.uniform_int(0, 2), f = 1 + rng.uniform_int(0, 3);
    const std::size_t k = 1 + rng.uniform_int(0, 4), h = k + rng.uniform_int(0, 8), w = k + rng.uniform_int(0, 8);
    const FilterBank g(oracle::random_tensor(rng, {f, c, k, k}), {c, h, w});
    const Tensor x = oracle::random_tensor(rng, g.input_shape());
    const Tensor z = oracle::random_tensor(rng, g.output_shape());
    CHECK(oracle::rel_err(dot(g.apply(x), z), dot(x, g.adjoint(z))) <= 1e-12);
  }
}

TEST_CASE("empty filter bank") {
  const FilterBank g(Tensor({0, 1, 3, 3}), {1, 6, 6});
  const Tensor z = g.apply(Tensor({1, 6, 6}, 1.0));
  CHECK(z.size() == 0);
  CHECK(norm2(g.adjoint(z)) == 0.0);
}

TEST_CASE("diagonal weights must be nonnegative") {
  CHECK_THROWS_AS(DiagonalWeights(Tensor({3}, -0.5)), ParameterError);
  const DiagonalWeights w(Tensor({3}, std::vector<double>{0.0, 1.0, 2.0}));
  const Tensor out = w.apply(Tensor({3}, 1.5));
  CHECK(out[0] == 0.0);
  CHECK(out[2] == 3.0);
}

TEST_CASE("system operator matches its dense assembly") {
  Rng rng(16);
  const std::size_t c = 1, n = 8;
  const BlurKernel k = random_kernel(rng, 3, 3);
  const BlurOperator h(k, {c, n, n});
  const Tensor filters = oracle::random_tensor(rng, {2, c, 3, 3});
  const FilterBank g(filters, h.input_shape());
  const DiagonalWeights w(oracle::random_tensor(rng, g.output_shape(), 0.0, 2.0));
  const double sigma2 = 0.3, alpha = 0.7;
  const SystemOperator s(h, g, w, sigma2, alpha);

  const oracle::Mat hd = oracle::blur_matrix(k.taps(), c, n, n);
  const oracle::Mat gd = oracle::bank_matrix(filters, n, n);
  const oracle::Mat sd = hd.transpose() * hd / sigma2 + gd.transpose() * oracle::vec(w.weights()).asDiagonal() * gd +
                         alpha * oracle::Mat::Identity(n * n, n * n);
  const Tensor x = oracle::random_tensor(rng, h.input_shape());
  CHECK(oracle::rel_err(oracle::vec(s.apply(x)), sd * oracle::vec(x)) <= 1e-12);

  const Tensor y = oracle::random_tensor(rng, h.output_shape());
  const Tensor rhs = build_rhs(h, y, x, sigma2, alpha);
  CHECK(oracle::rel_err(oracle::vec(rhs), hd.transpose() * oracle::vec(y) / sigma2 + alpha * oracle::vec(x)) <= 1e-12);
}

TEST_CASE("system operator with delta blur and no weights") {
  Rng rng(17);
  const BlurOperator h(BlurKernel::delta(3), {1, 8, 8});
  const FilterBank g(Tensor({0, 1, 3, 3}), h.input_shape());
  const DiagonalWeights w(Tensor(g.output_shape()));
  const SystemOperator s(h, g, w, 1.0, 1.0);
  const oracle::Mat hd = oracle::blur_matrix(BlurKernel::delta(3).taps(), 1, 8, 8);
  const oracle::Mat sd = hd.transpose() * hd + oracle::Mat::Identity(64, 64);
  const Tensor x = oracle::random_tensor(rng, h.input_shape());
  CHECK(oracle::rel_err(oracle::vec(s.apply(x)), sd * oracle::vec(x)) <= 1e-14);
  // Interior pixels see (1 + alpha) x.
  const Tensor sx = s.apply(x);
  CHECK(sx(0, 4, 4) == doctest::Approx(2.0 * x(0, 4, 4)));
  CHECK(sx(0, 0, 0) == doctest::Approx(x(0, 0, 0)));
}

TEST_CASE("system operator is symmetric and bounded below by alpha") {
  Rng rng(18);
  const BlurOperator h(random_kernel(rng, 5, 5), {2, 14, 12});
  const FilterBank g(oracle::random_tensor(rng, {4, 2, 3, 3}), h.input_shape());
  const DiagonalWeights w(oracle::random_tensor(rng, g.output_shape(), 0.0, 3.0));
  const double alpha = 0.05;
  const SystemOperator s(h, g, w, 0.01, alpha);
  for (int i = 0; i < 20; ++i) {
    const Tensor x = oracle::random_tensor(rng, h.input_shape());
    const Tensor y = oracle::random_tensor(rng, h.input_shape());
    CHECK(oracle::rel_err(dot(s.apply(x), y), dot(x, s.apply(y))) <= 1e-10);
  }
  for (int i = 0; i < 100; ++i) {
    Tensor x = oracle::random_tensor(rng, h.input_shape());
    x *= 1.0 / norm2(x);
    CHECK(dot(s.apply(x), x) >= alpha - 1e-10);
  }
}

TEST_CASE("build_rhs special cases") {
  Rng rng(19);
  const BlurOperator h(random_kernel(rng, 3, 3), {1, 7, 7});
  const Tensor y = oracle::random_tensor(rng, h.output_shape());
  const Tensor xp = oracle::random_tensor(rng, h.input_shape());
  Tensor want = h.adjoint(y);
  want *= 1.0 / 0.25;
  CHECK(oracle::rel_err(build_rhs(h, y, xp, 0.25, 0.0), want) == 0.0);
  CHECK(oracle::rel_err(build_rhs(h, Tensor(h.output_shape()), xp, 0.25, 1.0), xp) == 0.0);
}

TEST_CASE("operators reject wrong shapes") {
  const BlurOperator h(BlurKernel::delta(3), {1, 8, 8});
  CHECK_THROWS_AS(h.apply(Tensor({1, 7, 8})), DimensionError);
  CHECK_THROWS_AS(BlurOperator(BlurKernel::delta(9), {1, 8, 8}), DimensionError);
  const FilterBank g(Tensor({1, 1, 3, 3}), {1, 8, 8});
  const DiagonalWeights w(Tensor(g.output_shape()));
  CHECK_THROWS_AS(SystemOperator(h, g, w, 1.0, 0.0), ParameterError);
  CHECK_THROWS_AS(SystemOperator(h, g, w, 0.0, 1.0), ParameterError);
}
