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

#include "rlsd/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numbers>
#include <thread>

#include "rlsd/checkpoint.hpp"
#include "rlsd/config.hpp"
#include "rlsd/errors.hpp"
#include "rlsd/image_io.hpp"
#include "rlsd/metrics.hpp"

namespace rlsd {

namespace fs = std::filesystem;

void DataConfig::validate() const {
  if (channels != 1 && channels != 3) throw ParameterError("data channels must be 1 or 3");
  if (kernel_min == 0 || kernel_min > kernel_max) throw ParameterError("kernel size range is empty");
  if (kernel_min % 2 == 0 && kernel_min == kernel_max) throw ParameterError("kernel size range holds no odd size");
  if (!(noise_min >= 0.0 && noise_min <= noise_max)) throw ParameterError("noise range is empty");
  if (crop < kernel_max + 16) {
    throw ParameterError("crop " + std::to_string(crop) + " must be at least max kernel + 16 = " +
                         std::to_string(kernel_max + 16));
  }
  if (candidates == 0) throw ParameterError("need at least one crop candidate");
  if (!(walk_smoothness >= 0.0 && walk_smoothness < 1.0)) throw ParameterError("walk smoothness must lie in [0, 1)");
  if (!(walk_min_ratio > 0.0 && walk_min_ratio <= 1.0)) throw ParameterError("walk ratio must lie in (0, 1]");
}

void TrainConfig::validate() const {
  if (batch == 0 || epochs == 0 || batches_per_epoch == 0) throw ParameterError("batch, epochs and batches must be positive");
  if (!(lr > 0.0) || !(decay > 0.0) || !(warmup_epochs >= 0.0)) throw ParameterError("lr, decay must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0) || !(eps > 0.0))
    throw ParameterError("Adam constants out of range");
  if (workers == 0) throw ParameterError("need at least one worker");
}

// ---------------------------------------------------------------- kernels

BlurKernel synth_kernel(Rng& rng, std::size_t min_size, std::size_t max_size, double smoothness, double min_ratio) {
  const std::size_t lo = min_size | 1u, hi = (max_size % 2 == 1) ? max_size : max_size - 1;
  if (lo > hi) throw ParameterError("kernel size range holds no odd size");
  const std::size_t size = lo + 2 * static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>((hi - lo) / 2)));
  const std::size_t steps = std::max<std::size_t>(32, size * size / 10);

  const double angle = rng.uniform(0.0, std::numbers::pi);
  const double ratio = rng.uniform(min_ratio, 1.0);
  const double ca = std::cos(angle), sa = std::sin(angle);
  const double fresh = std::sqrt(1.0 - smoothness * smoothness);
  std::vector<double> px(steps), py(steps);
  double x = 0, y = 0, vx = 0, vy = 0;
  for (std::size_t i = 0; i < steps; ++i) {
    const double a = rng.normal(), b = ratio * rng.normal();
    vx = smoothness * vx + fresh * (ca * a - sa * b);
    vy = smoothness * vy + fresh * (sa * a + ca * b);
    x += vx;
    y += vy;
    px[i] = x;
    py[i] = y;
  }
  const auto [xmin, xmax] = std::minmax_element(px.begin(), px.end());
  const auto [ymin, ymax] = std::minmax_element(py.begin(), py.end());
  const double cx = 0.5 * (*xmin + *xmax), cy = 0.5 * (*ymin + *ymax);
  const double extent = std::max({*xmax - cx, *ymax - cy, 1e-12});
  const double radius = 0.5 * static_cast<double>(size - 3) * rng.uniform(0.6, 1.0);
  const double scale = radius / extent;
  const double c = 0.5 * static_cast<double>(size - 1);

  Tensor raw({size, size});
  for (std::size_t i = 0; i < steps; ++i) {
    const double u = c + (py[i] - cy) * scale, v = c + (px[i] - cx) * scale;
    const auto r0 = static_cast<std::size_t>(std::floor(u)), c0 = static_cast<std::size_t>(std::floor(v));
    const double fu = u - r0, fv = v - c0;
    raw(r0, c0) += (1 - fu) * (1 - fv);
    raw(r0, c0 + 1) += (1 - fu) * fv;
    raw(r0 + 1, c0) += fu * (1 - fv);
    raw(r0 + 1, c0 + 1) += fu * fv;
  }
  // 3x3 binomial anti-alias, zero outside.
  static constexpr double kStencil[3] = {0.25, 0.5, 0.25};
  Tensor psf({size, size});
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      double acc = 0.0;
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj) {
          const auto ii = static_cast<std::ptrdiff_t>(i) + di, jj = static_cast<std::ptrdiff_t>(j) + dj;
          if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(size) || jj >= static_cast<std::ptrdiff_t>(size)) continue;
          acc += kStencil[di + 1] * kStencil[dj + 1] * raw(static_cast<std::size_t>(ii), static_cast<std::size_t>(jj));
        }
      psf(i, j) = std::max(acc, 0.0);
    }
  psf *= 1.0 / sum(psf);
  return BlurKernel::from_psf(psf);
}

// ---------------------------------------------------------------- images

Tensor dead_leaves(Rng& rng, std::size_t channels, std::size_t height, std::size_t width) {
  const std::size_t h2 = 2 * height, w2 = 2 * width;
  Tensor big({channels, h2, w2});
  const double rmin = 6.0, rmax = 0.5 * static_cast<double>(std::min(h2, w2));
  const double a = 1.0 / (rmin * rmin), b = 1.0 / (rmax * rmax);
  // E[r^2] for density ~ r^-3 on [rmin, rmax].
  const double mean_r2 = 2.0 * std::log(rmax / rmin) / (a - b);
  const auto count = static_cast<std::size_t>(
      std::min(20000.0, 3.0 * static_cast<double>(h2 * w2) / (std::numbers::pi * mean_r2)));

  auto color = [&](std::vector<double>& out) {
    const double base = rng.uniform();
    for (std::size_t c = 0; c < channels; ++c)
      out[c] = channels == 1 ? base : std::clamp(base + 0.25 * rng.normal(), 0.0, 1.0);
  };
  std::vector<double> col(channels);
  color(col);
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < h2 * w2; ++i) big[c * h2 * w2 + i] = col[c];

  for (std::size_t n = 0; n < count; ++n) {
    const double r = 1.0 / std::sqrt(a - rng.uniform() * (a - b));
    const double cy = rng.uniform(-r, static_cast<double>(h2) + r);
    const double cx = rng.uniform(-r, static_cast<double>(w2) + r);
    color(col);
    // Mild linear shading across the disk.
    const double gy = 0.1 * rng.normal() / r, gx = 0.1 * rng.normal() / r;
    const auto i0 = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(cy - r)));
    const auto i1 = static_cast<std::ptrdiff_t>(std::min(static_cast<double>(h2) - 1, std::ceil(cy + r)));
    const auto j0 = static_cast<std::ptrdiff_t>(std::max(0.0, std::floor(cx - r)));
    const auto j1 = static_cast<std::ptrdiff_t>(std::min(static_cast<double>(w2) - 1, std::ceil(cx + r)));
    for (std::ptrdiff_t i = i0; i <= i1; ++i)
      for (std::ptrdiff_t j = j0; j <= j1; ++j) {
        const double dy = i + 0.5 - cy, dx = j + 0.5 - cx;
        if (dy * dy + dx * dx > r * r) continue;
        const double shade = gy * dy + gx * dx;
        for (std::size_t c = 0; c < channels; ++c)
          big[(c * h2 + static_cast<std::size_t>(i)) * w2 + static_cast<std::size_t>(j)] =
              std::clamp(col[c] + shade, 0.0, 1.0);
      }
  }
  Tensor out({channels, height, width});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j)
        out(c, i, j) = 0.25 * (big(c, 2 * i, 2 * j) + big(c, 2 * i, 2 * j + 1) + big(c, 2 * i + 1, 2 * j) +
                               big(c, 2 * i + 1, 2 * j + 1));
  return out;
}

std::optional<Tensor> select_crop(Rng& rng, const Tensor& source_in, std::size_t size, std::size_t candidates) {
  const Tensor source = as_image(source_in);
  if (source.dim(1) < size || source.dim(2) < size) return std::nullopt;
  std::optional<Tensor> best;
  double best_score = -1.0;
  for (std::size_t k = 0; k < candidates; ++k) {
    const auto top = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(source.dim(1) - size)));
    const auto left = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(source.dim(2) - size)));
    Tensor c = crop(source, top, left, size, size);
    const double score = laplacian_response(c);
    if (score > best_score) {
      best_score = score;
      best = std::move(c);
    }
  }
  return best;
}

Sample degrade(Rng& rng, Tensor x_gt, BlurKernel kernel, double sigma) {
  Sample s;
  s.x_gt = as_image(x_gt);
  s.y = BlurOperator(kernel, s.x_gt.shape()).apply(s.x_gt);
  if (sigma > 0.0)
    for (double& v : s.y.values()) v += sigma * rng.normal();
  s.kernel = std::move(kernel);
  s.sigma = sigma;
  return s;
}

std::optional<Sample> make_sample(Rng& rng, const Tensor& source, const DataConfig& cfg) {
  BlurKernel kernel = synth_kernel(rng, cfg.kernel_min, cfg.kernel_max, cfg.walk_smoothness, cfg.walk_min_ratio);
  std::optional<Tensor> x = select_crop(rng, source, cfg.crop, cfg.candidates);
  if (!x) return std::nullopt;
  const double sigma = rng.uniform(cfg.noise_min, cfg.noise_max);
  return degrade(rng, std::move(*x), std::move(kernel), sigma);
}

ImageSource::ImageSource(const DataConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.source_dir.empty()) return;
  for (const auto& p : list_pngs(cfg_.source_dir)) {
    Tensor img = convert_channels(load_png(p), cfg_.channels);
    if (img.dim(1) >= cfg_.crop && img.dim(2) >= cfg_.crop) files_.push_back(std::move(img));
  }
  if (files_.empty()) {
    throw IoError("no PNG of at least " + std::to_string(cfg_.crop) + "x" + std::to_string(cfg_.crop) +
                  " pixels in '" + cfg_.source_dir.string() + "'");
  }
}

Tensor ImageSource::draw(Rng& rng) const {
  if (files_.empty()) return dead_leaves(rng, cfg_.channels, 2 * cfg_.crop, 2 * cfg_.crop);
  return files_[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(files_.size()) - 1))];
}

std::vector<Sample> make_dataset(const DataConfig& cfg_in, std::size_t count, std::size_t size, std::uint64_t seed) {
  DataConfig cfg = cfg_in;
  cfg.crop = size;
  const ImageSource source(cfg);
  std::vector<Sample> out;
  const Rng root(seed);
  for (std::uint64_t i = 0; out.size() < count; ++i) {
    Rng rng = root.split(i);
    const Tensor img = source.draw(rng);
    if (auto s = make_sample(rng, img, cfg)) out.push_back(std::move(*s));
  }
  return out;
}

// ---------------------------------------------------------------- optimizer

AdamState adam_init(const ParamSet& params) { return {params.zeros_like(), params.zeros_like(), 0}; }

double learning_rate(const TrainConfig& cfg, std::size_t epoch, std::size_t batch_in_epoch) {
  const double done = static_cast<double>(epoch * cfg.batches_per_epoch + batch_in_epoch + 1);
  const double ramp_len = cfg.warmup_epochs * static_cast<double>(cfg.batches_per_epoch);
  const double warm = ramp_len > 0.0 ? std::min(1.0, done / ramp_len) : 1.0;
  return cfg.lr * warm * std::pow(cfg.decay, static_cast<double>(epoch));
}

void adam_step(ParamSet& params, const ParamSet& grads, AdamState& state, double lr, const TrainConfig& cfg) {
  for (const auto& [name, g] : grads) {
    if (!all_finite(g)) throw NumericalError("non-finite gradient for '" + name + "' (gradient explosion)");
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

// ---------------------------------------------------------------- loop

BatchGradient batch_gradient(const RlsdnModel& model, const std::vector<Sample>& batch, std::size_t workers,
                             LossRegion region) {
  std::vector<std::optional<RlsdnModel::Gradient>> parts(batch.size());
  std::vector<std::exception_ptr> errors(batch.size());
  auto work = [&](std::size_t first) {
    for (std::size_t i = first; i < batch.size(); i += workers) {
      try {
        parts[i] = model.loss_and_gradient(batch[i], region);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, batch.size()));
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  BatchGradient out;
  out.grads = model.params().zeros_like();
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& p : parts) {
    out.loss += inv * p->loss.loss;
    out.grads.accumulate(p->grads, inv);
    out.forward_cg_iterations += p->trace.total_cg_iterations();
    out.backward_cg_iterations += p->backward_cg_iterations;
  }
  return out;
}

double mean_psnr(const RlsdnModel& model, const std::vector<Sample>& dataset, std::optional<std::size_t> steps) {
  if (dataset.empty()) return 0.0;
  double total = 0.0;
  for (const Sample& s : dataset) {
    const auto r = model.restore(s.y, s.kernel, s.sigma, steps);
    total += psnr(observed_region(r.x, s.kernel, s.y.shape()), observed_region(s.x_gt, s.kernel, s.y.shape()));
  }
  return total / static_cast<double>(dataset.size());
}

std::string EpochLog::to_json() const {
  nlohmann::json j{{"epoch", epoch}, {"train_loss", train_loss}, {"val_psnr", val_psnr}, {"lr", lr},
                   {"wall_time_s", wall_time_s}};
  return j.dump();
}

namespace {

std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Everything that shapes the trajectory except the epoch count, so a run can
// be extended.
std::uint64_t run_hash(const RlsdnModel& model, const DataConfig& data, const TrainConfig& cfg) {
  std::string text = model.config().canonical();
  text += "|data=" + data.source_dir.string() + "," + std::to_string(data.channels) + "," + std::to_string(data.crop) +
          "," + std::to_string(data.kernel_min) + "," + std::to_string(data.kernel_max) + "," + g17(data.noise_min) +
          "," + g17(data.noise_max) + "," + std::to_string(data.candidates) + "," + g17(data.walk_smoothness) + "," +
          g17(data.walk_min_ratio) + "," + std::to_string(data.seed);
  text += "|train=" + std::to_string(cfg.batch) + "," + std::to_string(cfg.batches_per_epoch) + "," + g17(cfg.lr) +
          "," + g17(cfg.decay) + "," + g17(cfg.warmup_epochs) + "," + g17(cfg.beta1) + "," + g17(cfg.beta2) + "," +
          g17(cfg.eps) + "," + std::to_string(cfg.val_images) + "," + std::to_string(cfg.val_size) + "," +
          std::to_string(cfg.seed);
  if (cfg.loss_region != LossRegion::kLatent) text += ",loss=" + to_string(cfg.loss_region);
  return fnv1a64(text);
}

void quantize_all(ParamSet& p) {
  for (auto& [name, t] : p) quantize_f32(t);
}

}  // namespace

TrainResult train(RlsdnModel& model, const DataConfig& data, const TrainConfig& cfg, const fs::path& checkpoint_dir,
                  const std::function<void(const std::string&)>& progress) {
  data.validate();
  cfg.validate();
  if (data.channels != model.config().channels) throw ParameterError("data and model channel counts differ");
  std::error_code ec;
  fs::create_directories(checkpoint_dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory '" + checkpoint_dir.string() + "': " + ec.message());
  auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };

  const std::uint64_t hash = run_hash(model, data, cfg);
  TrainingState state;
  state.seed = cfg.seed;
  state.config_hash = hash;
  state.adam = adam_init(model.params());
  const fs::path latest = checkpoint_dir / "latest.rlsd";
  if (fs::exists(latest)) {
    LoadedCheckpoint ck = load_checkpoint(latest);
    if (!ck.state || ck.state->config_hash != hash) {
      throw ParameterError("checkpoint '" + latest.string() + "' belongs to a different run configuration");
    }
    model = std::move(ck.model);
    state = std::move(*ck.state);
    say("resuming after epoch " + std::to_string(state.epoch));
  }

  const ImageSource source(data);
  const std::vector<Sample> val = make_dataset(data, cfg.val_images, cfg.val_size, mix64(data.seed ^ 0x5A17ull));
  const Rng stream(data.seed);
  TrainResult result;
  const fs::path log_path = checkpoint_dir / "metrics.jsonl";

  for (std::size_t epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    double lr = 0.0;
    for (std::size_t b = 0; b < cfg.batches_per_epoch; ++b) {
      Rng batch_rng = stream.split(epoch * cfg.batches_per_epoch + b);
      std::vector<Sample> batch;
      for (std::uint64_t k = 0; batch.size() < cfg.batch; ++k) {
        Rng r = batch_rng.split(k);
        if (auto s = make_sample(r, source.draw(r), data)) batch.push_back(std::move(*s));
      }
      lr = learning_rate(cfg, epoch, b);
      try {
        BatchGradient g = batch_gradient(model, batch, cfg.workers, cfg.loss_region);
        adam_step(model.params(), g.grads, state.adam, lr, cfg);
        model.project();
        loss_sum += g.loss;
        ++loss_count;
        if ((b + 1) % 10 == 0 || b + 1 == cfg.batches_per_epoch) {
          say("epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(b + 1) + "/" +
              std::to_string(cfg.batches_per_epoch) + " loss " + std::to_string(g.loss) + " cg " +
              std::to_string(g.forward_cg_iterations) + "/" + std::to_string(g.backward_cg_iterations));
        }
      } catch (const NumericalError& e) {
        say("epoch " + std::to_string(epoch + 1) + " batch " + std::to_string(b + 1) + " skipped: " + e.what());
      }
    }
    state.epoch = epoch + 1;
    // Keep memory identical to what a resumed run would load.
    quantize_all(model.params());
    quantize_all(state.adam.m);
    quantize_all(state.adam.v);

    EpochLog log;
    log.epoch = epoch + 1;
    log.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    log.val_psnr = mean_psnr(model, val);
    log.lr = lr;
    log.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04zu.rlsd", epoch + 1);
    save_checkpoint(checkpoint_dir / name, model, &state);
    save_checkpoint(latest, model, &state);
    std::ofstream out(log_path, std::ios::app);
    if (!out) throw IoError("cannot append to '" + log_path.string() + "'");
    out << log.to_json() << "\n";
    say(log.to_json());
    result.log.push_back(log);
  }
  result.checkpoint = latest;
  return result;
}

}  // namespace rlsd
