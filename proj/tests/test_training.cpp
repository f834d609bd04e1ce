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

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "rlsd/checkpoint.hpp"
#include "rlsd/errors.hpp"
#include "rlsd/training.hpp"

using namespace rlsd;
namespace fs = std::filesystem;

namespace {

DataConfig small_data() {
  DataConfig d;
  d.crop = 24;
  d.kernel_min = 5;
  d.kernel_max = 7;
  d.seed = 21;
  return d;
}

ModelConfig small_model() {
  ModelConfig m;
  m.reg_filters = 4;
  m.reg_size = 3;
  m.wiener_filters = 2;
  m.wiener_size = 3;
  m.steps = 2;
  return m;
}

TrainConfig small_train() {
  TrainConfig t;
  t.batch = 2;
  t.epochs = 2;
  t.batches_per_epoch = 3;
  t.warmup_epochs = 1.0;
  t.lr = 3e-3;
  t.val_images = 2;
  t.val_size = 24;
  return t;
}

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("rlsd_test_training_" + name);
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST_CASE("synthetic kernels are normalized, odd and reproducible") {
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const BlurKernel k = synth_kernel(rng, 13, 35);
    const Tensor psf = k.to_psf();
    CHECK(k.height() % 2 == 1);
    CHECK(k.height() == k.width());
    CHECK(k.height() >= 13);
    CHECK(k.height() <= 35);
    double s = 0.0;
    for (double v : psf.values()) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
  Rng a(99), b(99);
  const Tensor ka = synth_kernel(a, 13, 35).taps(), kb = synth_kernel(b, 13, 35).taps();
  REQUIRE(ka.same_shape(kb));
  for (std::size_t i = 0; i < ka.size(); ++i) CHECK(ka[i] == kb[i]);
  CHECK_THROWS_AS(synth_kernel(a, 14, 14), ParameterError);
}

TEST_CASE("synthetic kernel support fraction") {
  Rng rng(2024);
  double total = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const Tensor t = synth_kernel(rng, 13, 35).taps();
    std::size_t nz = 0;
    for (double v : t.values()) nz += v > 0.0;
    total += static_cast<double>(nz) / static_cast<double>(t.size());
  }
  const double mean = total / 1000.0;
  CHECK(mean > 0.02);
  CHECK(mean < 0.6);
}

TEST_CASE("dead leaves images are deterministic and in range") {
  Rng a(5), b(5);
  const Tensor x = dead_leaves(a, 1, 40, 50), y = dead_leaves(b, 1, 40, 50);
  REQUIRE(x.shape() == Shape{1, 40, 50});
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(x[i] == y[i]);
    CHECK(x[i] >= 0.0);
    CHECK(x[i] <= 1.0);
  }
  CHECK(laplacian_response(x) > 0.0);
  Rng c(6);
  CHECK(dead_leaves(c, 3, 20, 20).shape() == Shape{3, 20, 20});
}

TEST_CASE("noiseless delta degradation is a centered crop") {
  Rng rng(7);
  const Tensor x = oracle::random_tensor(rng, {1, 20, 20}, 0.0, 1.0);
  const Sample s = degrade(rng, x, BlurKernel::delta(5), 0.0);
  const Tensor c = crop(x, 2, 2, 16, 16);
  REQUIRE(s.y.shape() == c.shape());
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(s.y[i] == c[i]);
  CHECK(s.sigma == 0.0);
}

TEST_CASE("observation SNR falls as the noise range rises") {
  Rng src(8);
  const Tensor image = dead_leaves(src, 1, 96, 96);
  double previous = std::numeric_limits<double>::infinity();
  for (double lo : {0.01, 0.03, 0.1, 0.3}) {
    DataConfig d;
    d.noise_min = lo;
    d.noise_max = lo * 1.2;
    double signal = 0.0, noise = 0.0;
    for (std::uint64_t k = 0; k < 8; ++k) {
      Rng rng = Rng(123).split(k);
      const Sample s = *make_sample(rng, image, d);
      const Tensor clean = BlurOperator(s.kernel, s.x_gt.shape()).apply(s.x_gt);
      signal += dot(clean, clean);
      const Tensor n = s.y - clean;
      noise += dot(n, n);
      CHECK(s.sigma >= d.noise_min);
      CHECK(s.sigma <= d.noise_max);
    }
    const double snr = 10.0 * std::log10(signal / noise);
    CHECK(snr < previous);
    previous = snr;
  }
}

TEST_CASE("crop selection prefers texture") {
  // Left half flat, right half noise.
  Rng fill(9);
  Tensor image({1, 48, 96});
  for (std::size_t i = 0; i < 48; ++i)
    for (std::size_t j = 0; j < 96; ++j) image(0, i, j) = j < 48 ? 0.5 : fill.uniform();
  // Crops are horizontal windows; count their textured columns.
  auto noisy_columns = [](const Tensor& c) {
    std::size_t n = 0;
    for (std::size_t j = 0; j < c.dim(2); ++j) n += c(0, 10, j) != 0.5;
    return n;
  };
  int textured = 0;
  double ranked = 0.0, single = 0.0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng = Rng(10).split(trial);
    const std::size_t n = noisy_columns(*select_crop(rng, image, 48, 8));
    textured += n > 0;
    ranked += static_cast<double>(n);
    Rng one = Rng(20).split(trial);
    single += static_cast<double>(noisy_columns(*select_crop(one, image, 48, 1)));
  }
  CHECK(textured == 100);
  CHECK(ranked > 1.5 * single);

  Rng rng(11);
  CHECK_FALSE(select_crop(rng, image, 64, 8).has_value());
  CHECK_FALSE(make_sample(rng, Tensor({1, 20, 20}), DataConfig{}).has_value());
}

TEST_CASE("data and train configs validate") {
  DataConfig d;
  CHECK_NOTHROW(d.validate());
  d.crop = 50;
  CHECK_THROWS_AS(d.validate(), ParameterError);
  d = DataConfig{};
  d.noise_min = 0.05;
  d.noise_max = 0.01;
  CHECK_THROWS_AS(d.validate(), ParameterError);
  TrainConfig t;
  t.batch = 0;
  CHECK_THROWS_AS(t.validate(), ParameterError);
}

TEST_CASE("datasets are reproducible") {
  const DataConfig d = small_data();
  const auto a = make_dataset(d, 3, 24, 5), b = make_dataset(d, 3, 24, 5);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(a[i].sigma == b[i].sigma);
    CHECK(a[i].x_gt.shape() == Shape{1, 24, 24});
    for (std::size_t k = 0; k < a[i].y.size(); ++k) CHECK(a[i].y[k] == b[i].y[k]);
  }
}

TEST_CASE("adam: zero gradient keeps parameters and decays moments") {
  ParamSet p;
  p.add("w", Tensor({3}, 0.7));
  AdamState st = adam_init(p);
  st.m.at("w")[0] = 0.5;
  st.v.at("w")[0] = 0.25;
  st.t = 3;
  TrainConfig cfg;
  const ParamSet zero = p.zeros_like();
  ParamSet before = p;
  st.m.at("w")[1] = 0.0;
  adam_step(p, zero, st, 1e-3, cfg);
  CHECK(st.t == 4);
  CHECK(st.m.at("w")[0] == doctest::Approx(0.45));
  CHECK(st.v.at("w")[0] == doctest::Approx(0.24975));
  CHECK(p.at("w")[1] == before.at("w")[1]);
  CHECK(p.at("w")[2] == before.at("w")[2]);
}

TEST_CASE("adam: a constant gradient moves by lr per step") {
  ParamSet p;
  p.add("w", Tensor({2}, 0.0));
  ParamSet g;
  g.add("w", Tensor({2}, 0.0));
  g.at("w")[0] = 3.0;
  g.at("w")[1] = -0.02;
  AdamState st = adam_init(p);
  TrainConfig cfg;
  double prev0 = 0.0, prev1 = 0.0;
  for (int i = 0; i < 300; ++i) {
    adam_step(p, g, st, 1e-2, cfg);
    const double d0 = p.at("w")[0] - prev0, d1 = p.at("w")[1] - prev1;
    CHECK(std::abs(d0 + 1e-2) <= 1e-7);
    CHECK(std::abs(d1 - 1e-2) <= 1e-5);
    prev0 = p.at("w")[0];
    prev1 = p.at("w")[1];
  }
  g.at("w")[0] = std::nan("");
  CHECK_THROWS_AS(adam_step(p, g, st, 1e-2, cfg), NumericalError);
}

TEST_CASE("learning rate warmup and decay") {
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.batches_per_epoch = 200;
  cfg.warmup_epochs = 2;
  const double warm_batches = 400.0;
  CHECK(learning_rate(cfg, 0, 0) <= 2.0 * cfg.lr / warm_batches);
  CHECK(learning_rate(cfg, 0, 0) > 0.0);
  CHECK(learning_rate(cfg, 0, 0) < learning_rate(cfg, 0, 199));
  CHECK(learning_rate(cfg, 0, 199) == doctest::Approx(cfg.lr / 2));
  CHECK(learning_rate(cfg, 1, 199) == doctest::Approx(cfg.lr * 0.98));
  CHECK(learning_rate(cfg, 4, 10) == doctest::Approx(cfg.lr * std::pow(0.98, 4)));
  cfg.warmup_epochs = 0;
  CHECK(learning_rate(cfg, 0, 0) == cfg.lr);
}

TEST_CASE("overfitting a single batch lowers the loss") {
  const DataConfig d = small_data();
  RlsdnModel model = RlsdnModel::initialize(small_model(), 3);
  const auto batch = make_dataset(d, 2, 24, 17);
  TrainConfig cfg;
  AdamState st = adam_init(model.params());
  const double first = batch_gradient(model, batch, 1).loss;
  double last = first;
  for (int i = 0; i < 50; ++i) {
    const BatchGradient g = batch_gradient(model, batch, 1);
    adam_step(model.params(), g.grads, st, 3e-3, cfg);
    model.project();
    last = g.loss;
  }
  last = batch_gradient(model, batch, 1).loss;
  MESSAGE("single-batch loss " << first << " -> " << last);
  CHECK(last < 0.9 * first);
}

TEST_CASE("batch gradients do not depend on the worker count") {
  RlsdnModel model = RlsdnModel::initialize(small_model(), 4);
  const auto batch = make_dataset(small_data(), 3, 24, 18);
  const BatchGradient a = batch_gradient(model, batch, 1), b = batch_gradient(model, batch, 3);
  CHECK(a.loss == b.loss);
  for (const auto& [name, t] : a.grads)
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == b.grads.at(name)[i]);
}

TEST_CASE("batch gradient honours the loss region") {
  RlsdnModel model = RlsdnModel::initialize(small_model(), 4);
  const auto batch = make_dataset(small_data(), 2, 24, 18);
  const BatchGradient full = batch_gradient(model, batch, 1);
  const BatchGradient win = batch_gradient(model, batch, 1, LossRegion::kObserved);
  double expect = 0.0;
  for (const auto& s : batch) {
    const StepTrace t = model.restore(s.y, s.kernel, s.sigma).trace;
    expect += loss_sum_mse(t, s.x_gt, s.kernel, s.y.shape()).loss;
  }
  CHECK(win.loss == doctest::Approx(expect / 2.0).epsilon(1e-12));
  CHECK(win.loss != full.loss);
}

TEST_CASE("resumed training matches an uninterrupted run") {
  const DataConfig d = small_data();
  TrainConfig cfg = small_train();

  const fs::path full_dir = scratch("full");
  RlsdnModel full = RlsdnModel::initialize(small_model(), 12);
  const TrainResult full_run = train(full, d, cfg, full_dir);
  REQUIRE(full_run.log.size() == 2);

  const fs::path part_dir = scratch("part");
  RlsdnModel part = RlsdnModel::initialize(small_model(), 12);
  TrainConfig first = cfg;
  first.epochs = 1;
  train(part, d, first, part_dir);
  RlsdnModel fresh = RlsdnModel::initialize(small_model(), 12);
  const TrainResult resumed = train(fresh, d, cfg, part_dir);
  REQUIRE(resumed.log.size() == 1);
  CHECK(resumed.log[0].epoch == 2);
  CHECK(resumed.log[0].train_loss == full_run.log[1].train_loss);
  CHECK(resumed.log[0].val_psnr == full_run.log[1].val_psnr);
  for (const auto& [name, t] : full.params())
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == fresh.params().at(name)[i]);

  // Files: per-epoch checkpoints, latest, one JSON line per epoch.
  CHECK(fs::exists(full_dir / "epoch_0001.rlsd"));
  CHECK(fs::exists(full_dir / "epoch_0002.rlsd"));
  std::ifstream log(full_dir / "metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"epoch", "train_loss", "val_psnr", "lr", "wall_time_s"}) CHECK(j.contains(key));
    ++lines;
  }
  CHECK(lines == 2);

  // A different configuration refuses to resume.
  TrainConfig other = cfg;
  other.lr = 1e-2;
  RlsdnModel m = RlsdnModel::initialize(small_model(), 12);
  CHECK_THROWS_AS(train(m, d, other, part_dir), ParameterError);

  fs::remove_all(full_dir);
  fs::remove_all(part_dir);
}
