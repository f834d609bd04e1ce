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
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rlsd/model.hpp"

namespace rlsd {

struct DataConfig {
  // PNG directory; empty means procedural dead-leaves images.
  std::filesystem::path source_dir;
  std::size_t channels = 1;
  std::size_t crop = 64;
  std::size_t kernel_min = 13;
  std::size_t kernel_max = 35;
  // Noise std as a fraction of the peak intensity (1.0).
  double noise_min = 0.01;
  double noise_max = 0.03;
  std::size_t candidates = 8;
  // Random-walk kernel shape.
  double walk_smoothness = 0.95;  // velocity memory in [0, 1)
  double walk_min_ratio = 0.25;  // minor/major axis of the increment covariance
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainConfig {
  std::size_t batch = 4;
  std::size_t epochs = 5;
  std::size_t batches_per_epoch = 200;
  double lr = 1e-3;
  double decay = 0.98;
  double warmup_epochs = 2.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t workers = 1;
  std::size_t val_images = 8;
  std::size_t val_size = 96;
  std::uint64_t seed = 1;
  LossRegion loss_region = LossRegion::kLatent;

  void validate() const;
  std::size_t total_batches() const noexcept { return epochs * batches_per_epoch; }
};

// Random-walk motion blur: size drawn odd from [min_size, max_size].
BlurKernel synth_kernel(Rng& rng, std::size_t min_size, std::size_t max_size, double smoothness = 0.95,
                        double min_ratio = 0.25);

// Dead-leaves image in [0, 1]: occluding disks with power-law radii, drawn
// at 2x and box-downsampled.
Tensor dead_leaves(Rng& rng, std::size_t channels, std::size_t height, std::size_t width);

// Highest-Laplacian crop of `size` among `candidates` random windows.
std::optional<Tensor> select_crop(Rng& rng, const Tensor& source, std::size_t size, std::size_t candidates);

// One training example, or nullopt when `source` is too small for a crop.
std::optional<Sample> make_sample(Rng& rng, const Tensor& source, const DataConfig& cfg);

// Degrades x_gt with `kernel` and noise of std `sigma`.
Sample degrade(Rng& rng, Tensor x_gt, BlurKernel kernel, double sigma);

// Supplies source images: PNG files from a directory or dead-leaves.
class ImageSource {
 public:
  explicit ImageSource(const DataConfig& cfg);
  // Deterministic in `rng`.
  Tensor draw(Rng& rng) const;
  std::size_t file_count() const noexcept { return files_.size(); }

 private:
  DataConfig cfg_;
  std::vector<Tensor> files_;
};

// Seeded evaluation set drawn from the same distribution as training data.
std::vector<Sample> make_dataset(const DataConfig& cfg, std::size_t count, std::size_t size, std::uint64_t seed);

struct AdamState {
  ParamSet m, v;
  std::uint64_t t = 0;
};

AdamState adam_init(const ParamSet& params);

// Learning rate after `batches_done` optimizer steps: linear warmup over
// warmup_epochs, then decay^epoch.
double learning_rate(const TrainConfig& cfg, std::size_t epoch, std::size_t batch_in_epoch);

// One bias-corrected Adam update. Throws NumericalError on a non-finite
// gradient, leaving params and state untouched.
void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr, const TrainConfig& cfg);

// Mean loss and mean gradient over a batch; samples are split across
// `workers` threads, summed in a fixed order.
struct BatchGradient {
  double loss = 0.0;
  ParamSet grads;
  int forward_cg_iterations = 0;
  int backward_cg_iterations = 0;
};
BatchGradient batch_gradient(const RlsdnModel& model, const std::vector<Sample>& batch, std::size_t workers,
                             LossRegion region = LossRegion::kLatent);

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_psnr = 0.0;
  double lr = 0.0;
  double wall_time_s = 0.0;
  std::string to_json() const;
};

struct TrainResult {
  std::filesystem::path checkpoint;
  std::vector<EpochLog> log;
};

// Runs (or resumes, if checkpoint_dir holds latest.rlsd for the same
// configuration) the training loop. Writes epoch_NNNN.rlsd, latest.rlsd and
// metrics.jsonl into checkpoint_dir.
TrainResult train(RlsdnModel& model, const DataConfig& data, const TrainConfig& cfg,
                  const std::filesystem::path& checkpoint_dir,
                  const std::function<void(const std::string&)>& progress = {});

// Mean PSNR of the restored images on the observed region.
double mean_psnr(const RlsdnModel& model, const std::vector<Sample>& dataset,
                 std::optional<std::size_t> steps = std::nullopt);

}  // namespace rlsd
