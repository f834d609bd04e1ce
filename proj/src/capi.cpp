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

#include "rlsd/rlsd.h"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <optional>
#include <string>

#include "rlsd/checkpoint.hpp"
#include "rlsd/config.hpp"
#include "rlsd/errors.hpp"
#include "rlsd/gradcheck.hpp"
#include "rlsd/image_io.hpp"
#include "rlsd/metrics.hpp"
#include "rlsd/model.hpp"
#include "rlsd/training.hpp"

struct rlsd_image {
  rlsd::Tensor t;
};
struct rlsd_kernel {
  rlsd::BlurKernel k;
};
struct rlsd_model {
  rlsd::RlsdnModel m;
};
struct rlsd_trace {
  rlsd::StepTrace trace;
  double sigma = 0.0;
  bool sigma_estimated = false;
};

namespace {

namespace fs = std::filesystem;
using namespace rlsd;

thread_local std::string g_last_error;

rlsd_status fail(rlsd_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <typename F>
rlsd_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return RLSD_OK;
  } catch (const DimensionError& e) {
    return fail(RLSD_DIMENSION_ERROR, e.what());
  } catch (const ParameterError& e) {
    return fail(RLSD_INVALID_ARGUMENT, e.what());
  } catch (const IoError& e) {
    return fail(RLSD_IO_ERROR, e.what());
  } catch (const NumericalError& e) {
    return fail(RLSD_NUMERICAL_ERROR, e.what());
  } catch (const std::bad_alloc&) {
    return fail(RLSD_INTERNAL_ERROR, "out of memory");
  } catch (const std::exception& e) {
    return fail(RLSD_INTERNAL_ERROR, e.what());
  }
}

void need(const void* p, const char* what) {
  if (!p) throw ParameterError(std::string(what) + " must not be NULL");
}

char* to_c_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

RunConfig config_or_default(const char* path) { return path ? load_config(path) : RunConfig{}; }

}  // namespace

extern "C" {

const char* rlsd_version(void) { return "1.0.0"; }

const char* rlsd_last_error(void) { return g_last_error.c_str(); }

const char* rlsd_status_name(rlsd_status status) {
  switch (status) {
    case RLSD_OK: return "ok";
    case RLSD_INVALID_ARGUMENT: return "invalid argument";
    case RLSD_DIMENSION_ERROR: return "dimension error";
    case RLSD_IO_ERROR: return "i/o error";
    case RLSD_NUMERICAL_ERROR: return "numerical error";
    case RLSD_INTERNAL_ERROR: return "internal error";
  }
  return "unknown status";
}

void rlsd_string_free(char* s) { std::free(s); }

// ---------------------------------------------------------------- images

rlsd_status rlsd_image_create(size_t channels, size_t height, size_t width, const double* data, rlsd_image** out) {
  return guarded([&] {
    need(out, "out");
    if (channels == 0 || height == 0 || width == 0) throw DimensionError("image dimensions must be positive");
    auto img = std::make_unique<rlsd_image>();
    img->t = Tensor({channels, height, width});
    if (data) std::copy_n(data, img->t.size(), img->t.data());
    *out = img.release();
  });
}

rlsd_status rlsd_image_load(const char* path, rlsd_image** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new rlsd_image{load_png(path)};
  });
}

rlsd_status rlsd_image_save(const rlsd_image* image, const char* path, int bit_depth) {
  return guarded([&] {
    need(image, "image");
    need(path, "path");
    save_png(path, image->t, bit_depth);
  });
}

void rlsd_image_free(rlsd_image* image) { delete image; }
size_t rlsd_image_channels(const rlsd_image* image) { return image ? image->t.dim(0) : 0; }
size_t rlsd_image_height(const rlsd_image* image) { return image ? image->t.dim(1) : 0; }
size_t rlsd_image_width(const rlsd_image* image) { return image ? image->t.dim(2) : 0; }
const double* rlsd_image_data(const rlsd_image* image) { return image ? image->t.data() : nullptr; }

rlsd_status rlsd_image_convert(const rlsd_image* image, size_t channels, rlsd_image** out) {
  return guarded([&] {
    need(image, "image");
    need(out, "out");
    *out = new rlsd_image{convert_channels(image->t, channels)};
  });
}

// ---------------------------------------------------------------- kernels

rlsd_status rlsd_kernel_create(size_t height, size_t width, const double* psf, rlsd_kernel** out) {
  return guarded([&] {
    need(psf, "psf");
    need(out, "out");
    Tensor t({height, width});
    std::copy_n(psf, t.size(), t.data());
    *out = new rlsd_kernel{BlurKernel::from_psf(t)};
  });
}

rlsd_status rlsd_kernel_load(const char* path, rlsd_kernel** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new rlsd_kernel{load_kernel_file(path)};
  });
}

rlsd_status rlsd_kernel_save(const rlsd_kernel* kernel, const char* path) {
  return guarded([&] {
    need(kernel, "kernel");
    need(path, "path");
    save_kernel_file(path, kernel->k);
  });
}

void rlsd_kernel_free(rlsd_kernel* kernel) { delete kernel; }
size_t rlsd_kernel_height(const rlsd_kernel* kernel) { return kernel ? kernel->k.height() : 0; }
size_t rlsd_kernel_width(const rlsd_kernel* kernel) { return kernel ? kernel->k.width() : 0; }

rlsd_status rlsd_blur(const rlsd_image* image, const rlsd_kernel* kernel, double sigma, uint64_t seed,
                      rlsd_image** out) {
  return guarded([&] {
    need(image, "image");
    need(kernel, "kernel");
    need(out, "out");
    if (!(sigma >= 0.0)) throw ParameterError("noise sigma must be nonnegative");
    Rng rng(seed);
    *out = new rlsd_image{degrade(rng, image->t, kernel->k, sigma).y};
  });
}

// ---------------------------------------------------------------- models

rlsd_status rlsd_model_create(const char* config_path, uint64_t seed, rlsd_model** out) {
  return guarded([&] {
    need(out, "out");
    *out = new rlsd_model{RlsdnModel::initialize(config_or_default(config_path).model, seed)};
  });
}

rlsd_status rlsd_model_load(const char* checkpoint_path, rlsd_model** out) {
  return guarded([&] {
    need(checkpoint_path, "checkpoint_path");
    need(out, "out");
    *out = new rlsd_model{load_checkpoint(checkpoint_path).model};
  });
}

rlsd_status rlsd_model_save(const rlsd_model* model, const char* checkpoint_path) {
  return guarded([&] {
    need(model, "model");
    need(checkpoint_path, "checkpoint_path");
    save_checkpoint(checkpoint_path, model->m);
  });
}

void rlsd_model_free(rlsd_model* model) { delete model; }
size_t rlsd_model_steps(const rlsd_model* model) { return model ? model->m.config().steps + 1 : 0; }
size_t rlsd_model_channels(const rlsd_model* model) { return model ? model->m.config().channels : 0; }

rlsd_status rlsd_model_set_solver(rlsd_model* model, int max_iters, double rel_tol) {
  return guarded([&] {
    need(model, "model");
    CgConfig cg = model->m.config().cg_forward;
    if (max_iters > 0) cg.max_iters = max_iters;
    if (rel_tol > 0.0) cg.rel_tol = rel_tol;
    cg.validate();
    model->m.config().cg_forward = cg;
  });
}

rlsd_status rlsd_model_describe(const rlsd_model* model, char** ini) {
  return guarded([&] {
    need(model, "model");
    need(ini, "ini");
    *ini = to_c_string(model_config_to_ini(model->m.config()));
  });
}

rlsd_status rlsd_deblur(const rlsd_model* model, const rlsd_image* observed, const rlsd_kernel* kernel, double sigma,
                        size_t steps, const rlsd_image* ground_truth, rlsd_image** restored, rlsd_trace** trace) {
  return guarded([&] {
    need(model, "model");
    need(observed, "observed");
    need(kernel, "kernel");
    need(restored, "restored");
    const bool estimate = !(sigma > 0.0);
    if (estimate) {
      sigma = estimate_sigma_wmad(observed->t);
      if (!(sigma > 0.0)) throw ParameterError("noise estimate is zero; pass sigma explicitly");
    }
    auto r = model->m.restore(observed->t, kernel->k, sigma, steps ? std::optional<std::size_t>(steps) : std::nullopt,
                              ground_truth ? &ground_truth->t : nullptr);
    auto img = std::make_unique<rlsd_image>(rlsd_image{std::move(r.x)});
    if (trace) *trace = new rlsd_trace{std::move(r.trace), sigma, estimate};
    *restored = img.release();
  });
}

void rlsd_trace_free(rlsd_trace* trace) { delete trace; }
size_t rlsd_trace_steps(const rlsd_trace* trace) { return trace ? trace->trace.size() : 0; }
double rlsd_trace_sigma(const rlsd_trace* trace) { return trace ? trace->sigma : 0.0; }

rlsd_status rlsd_trace_json(const rlsd_trace* trace, char** json) {
  return guarded([&] {
    need(trace, "trace");
    need(json, "json");
    nlohmann::json j = nlohmann::json::parse(to_json(trace->trace));
    j["sigma"] = trace->sigma;
    j["sigma_estimated"] = trace->sigma_estimated;
    *json = to_c_string(j.dump());
  });
}

// ---------------------------------------------------------------- metrics

rlsd_status rlsd_estimate_sigma(const rlsd_image* image, double* sigma) {
  return guarded([&] {
    need(image, "image");
    need(sigma, "sigma");
    *sigma = estimate_sigma_wmad(image->t);
  });
}

rlsd_status rlsd_score(const rlsd_image* restored, const rlsd_image* ground_truth, size_t border, double* psnr_out,
                       double* ssim_out) {
  return guarded([&] {
    need(restored, "restored");
    need(ground_truth, "ground_truth");
    const ImageScore s = sun_protocol_score(restored->t, ground_truth->t, border);
    if (psnr_out) *psnr_out = s.psnr;
    if (ssim_out) *ssim_out = s.ssim;
  });
}

rlsd_status rlsd_observed_region(const rlsd_image* latent, const rlsd_kernel* kernel, size_t height, size_t width,
                                 rlsd_image** out) {
  return guarded([&] {
    need(latent, "latent");
    need(kernel, "kernel");
    need(out, "out");
    *out = new rlsd_image{observed_region(latent->t, kernel->k, {latent->t.dim(0), height, width})};
  });
}

// ---------------------------------------------------------------- experiments

rlsd_status rlsd_train(const char* config_path, const char* checkpoint_dir, size_t epochs, rlsd_progress_fn progress,
                       void* user) {
  return guarded([&] {
    need(checkpoint_dir, "checkpoint_dir");
    RunConfig rc = config_or_default(config_path);
    if (epochs > 0) rc.train.epochs = epochs;
    RlsdnModel model = RlsdnModel::initialize(rc.model, rc.train.seed);
    std::function<void(const std::string&)> say;
    if (progress) say = [&](const std::string& msg) { progress(msg.c_str(), user); };
    train(model, rc.data, rc.train, checkpoint_dir, say);
  });
}

rlsd_status rlsd_synthesize(const char* config_path, size_t count, size_t size, uint64_t seed, const char* out_dir,
                            char** manifest) {
  return guarded([&] {
    need(out_dir, "out_dir");
    const RunConfig rc = config_or_default(config_path);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create '" + std::string(out_dir) + "': " + ec.message());
    const auto samples = make_dataset(rc.data, count, size ? size : rc.data.crop, seed);
    std::string lines;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      char stem[16];
      std::snprintf(stem, sizeof stem, "%03zu", i);
      const fs::path base = fs::path(out_dir) / stem;
      const Sample& s = samples[i];
      save_png(base.string() + "_sharp.png", s.x_gt);
      save_png(base.string() + "_blurred.png", s.y);
      save_kernel_file(base.string() + "_kernel.txt", s.kernel);
      nlohmann::json j{{"sharp", std::string(stem) + "_sharp.png"},
                       {"blurred", std::string(stem) + "_blurred.png"},
                       {"kernel", std::string(stem) + "_kernel.txt"},
                       {"sigma", s.sigma}};
      lines += j.dump() + "\n";
    }
    if (manifest) *manifest = to_c_string(lines);
  });
}

rlsd_status rlsd_grad_check(uint64_t seed, int* passed, char** report) {
  return guarded([&] {
    const GradCheckReport r = grad_check_all(seed);
    if (passed) *passed = r.passed() ? 1 : 0;
    if (report) *report = to_c_string(r.to_jsonl());
  });
}

rlsd_status rlsd_convergence(const rlsd_model* model, const char* config_path, size_t images, size_t size,
                             uint64_t seed, const size_t* step_counts, size_t n_steps, const int* cg_caps,
                             size_t n_caps, char** csv) {
  return guarded([&] {
    need(model, "model");
    need(csv, "csv");
    if (n_steps == 0 || n_caps == 0) throw ParameterError("need at least one step count and one CG cap");
    need(step_counts, "step_counts");
    need(cg_caps, "cg_caps");
    const RunConfig rc = config_or_default(config_path);
    const auto data = make_dataset(rc.data, images, size ? size : rc.data.crop, seed);
    const auto rows = convergence_study(model->m, data, std::vector<std::size_t>(step_counts, step_counts + n_steps),
                                        std::vector<int>(cg_caps, cg_caps + n_caps));
    *csv = to_c_string(convergence_csv(rows));
  });
}

rlsd_status rlsd_bench(const rlsd_model* model, size_t size, size_t kernel_size, size_t repeats, uint64_t seed,
                       char** json) {
  return guarded([&] {
    need(model, "model");
    need(json, "json");
    if (repeats == 0) throw ParameterError("repeats must be positive");
    DataConfig d;
    d.channels = model->m.config().channels;
    d.kernel_min = d.kernel_max = kernel_size;
    d.crop = size;
    d.validate();
    Rng rng(seed);
    const Tensor image = dead_leaves(rng, d.channels, 2 * size, 2 * size);
    const Sample s = *make_sample(rng, image, d);
    using clock = std::chrono::steady_clock;
    double fwd = 0.0, grad = 0.0;
    int fwd_iters = 0, bwd_iters = 0;
    for (std::size_t r = 0; r < repeats; ++r) {
      auto t0 = clock::now();
      const auto out = model->m.restore(s.y, s.kernel, s.sigma);
      auto t1 = clock::now();
      const auto g = model->m.loss_and_gradient(s);
      auto t2 = clock::now();
      fwd += std::chrono::duration<double>(t1 - t0).count();
      grad += std::chrono::duration<double>(t2 - t1).count();
      fwd_iters = out.trace.total_cg_iterations();
      bwd_iters = g.backward_cg_iterations;
    }
    nlohmann::json j{{"size", size},
                     {"kernel", kernel_size},
                     {"repeats", repeats},
                     {"forward_s", fwd / static_cast<double>(repeats)},
                     {"gradient_s", grad / static_cast<double>(repeats)},
                     {"forward_cg_iterations", fwd_iters},
                     {"backward_cg_iterations", bwd_iters}};
    *json = to_c_string(j.dump());
  });
}

}  // extern "C"
