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

// rlsd: command-line front end over the C interface.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "rlsd/rlsd.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUser = 1;
constexpr int kExitNumerical = 2;

// Carries a library status up to main().
struct Failure {
  rlsd_status status;
  std::string message;
};

void check(rlsd_status s, const std::string& context = {}) {
  if (s == RLSD_OK) return;
  std::string msg = rlsd_last_error();
  if (!context.empty()) msg = context + ": " + msg;
  throw Failure{s, msg};
}

int exit_code(rlsd_status s) { return s == RLSD_NUMERICAL_ERROR ? kExitNumerical : kExitUser; }

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const noexcept { Free(p); }
};
using Image = std::unique_ptr<rlsd_image, Deleter<rlsd_image, rlsd_image_free>>;
using Kernel = std::unique_ptr<rlsd_kernel, Deleter<rlsd_kernel, rlsd_kernel_free>>;
using Model = std::unique_ptr<rlsd_model, Deleter<rlsd_model, rlsd_model_free>>;
using Trace = std::unique_ptr<rlsd_trace, Deleter<rlsd_trace, rlsd_trace_free>>;

struct CString {
  char* p = nullptr;
  ~CString() { rlsd_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

Image load_image(const std::string& path) {
  rlsd_image* img = nullptr;
  check(rlsd_image_load(path.c_str(), &img));
  return Image(img);
}

Kernel load_kernel(const std::string& path) {
  rlsd_kernel* k = nullptr;
  check(rlsd_kernel_load(path.c_str(), &k));
  return Kernel(k);
}

Model load_model(const std::string& checkpoint, const std::string& config, std::uint64_t seed) {
  rlsd_model* m = nullptr;
  if (!checkpoint.empty()) {
    check(rlsd_model_load(checkpoint.c_str(), &m));
  } else {
    check(rlsd_model_create(config.empty() ? nullptr : config.c_str(), seed, &m));
  }
  return Model(m);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) throw Failure{RLSD_IO_ERROR, "cannot write '" + path + "'"};
}

const char* or_null(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

// ---------------------------------------------------------------- deblur

struct DeblurOptions {
  std::string input, kernel, checkpoint, config, output, trace, ground_truth;
  double sigma = 0.0;
  std::size_t steps = 0;
  int cg_max = 0;
  double cg_tol = 0.0;
  std::size_t border = 0;
  bool crop_observed = false;
  std::size_t workers = 1;
  std::uint64_t seed = 1;
};

struct Job {
  fs::path input, kernel, output, trace, ground_truth;
};

// Finds "<stem>.txt" or "<stem>.png" inside a kernel directory.
fs::path kernel_for(const fs::path& dir, const fs::path& image) {
  for (const char* ext : {".txt", ".png"}) {
    fs::path p = dir / (image.stem().string() + ext);
    if (fs::exists(p)) return p;
  }
  throw Failure{RLSD_IO_ERROR, "no kernel for '" + image.string() + "' in '" + dir.string() + "'"};
}

std::vector<Job> plan_jobs(const DeblurOptions& o) {
  std::vector<Job> jobs;
  if (!fs::is_directory(o.input)) {
    jobs.push_back({o.input, o.kernel, o.output, o.trace, o.ground_truth});
    return jobs;
  }
  if (!o.output.empty()) fs::create_directories(o.output);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(o.input)) {
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && ext == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Failure{RLSD_IO_ERROR, "no PNG files in '" + o.input + "'"};
  for (const auto& f : files) {
    Job j;
    j.input = f;
    j.kernel = fs::is_directory(o.kernel) ? kernel_for(o.kernel, f) : fs::path(o.kernel);
    if (!o.output.empty()) j.output = fs::path(o.output) / f.filename();
    if (!o.trace.empty()) {
      fs::create_directories(o.trace);
      j.trace = fs::path(o.trace) / (f.stem().string() + ".json");
    }
    if (!o.ground_truth.empty()) j.ground_truth = fs::path(o.ground_truth) / f.filename();
    jobs.push_back(std::move(j));
  }
  return jobs;
}

nlohmann::json run_job(const rlsd_model* model, const Job& job, const DeblurOptions& o) {
  const Image y = load_image(job.input.string());
  const Kernel k = load_kernel(job.kernel.string());
  Image gt;
  if (!job.ground_truth.empty()) gt = load_image(job.ground_truth.string());

  rlsd_image* out = nullptr;
  rlsd_trace* tr = nullptr;
  check(rlsd_deblur(model, y.get(), k.get(), o.sigma, o.steps, gt.get(), &out, &tr), job.input.string());
  Image restored(out);
  Trace trace(tr);

  nlohmann::json line{{"image", job.input.filename().string()},
                      {"sigma", rlsd_trace_sigma(trace.get())},
                      {"steps", rlsd_trace_steps(trace.get())}};
  CString json;
  check(rlsd_trace_json(trace.get(), &json.p));
  const auto tj = nlohmann::json::parse(json.str());
  int iters = 0;
  for (const auto& v : tj["cg_iterations"]) iters += v.get<int>();
  line["cg_iterations"] = iters;
  if (!job.trace.empty()) write_text(job.trace.string(), json.str() + "\n");

  if (gt) {
    double p = 0.0, s = 0.0;
    const size_t oh = rlsd_image_height(y.get()), ow = rlsd_image_width(y.get());
    Image rs, gs;
    // latent-sized ground truth is scored on the observed window only
    if (rlsd_image_height(gt.get()) == rlsd_image_height(restored.get()) &&
        rlsd_image_width(gt.get()) == rlsd_image_width(restored.get())) {
      rlsd_image* c = nullptr;
      check(rlsd_observed_region(restored.get(), k.get(), oh, ow, &c));
      rs.reset(c);
      check(rlsd_observed_region(gt.get(), k.get(), oh, ow, &c));
      gs.reset(c);
    }
    check(rlsd_score(rs ? rs.get() : restored.get(), gs ? gs.get() : gt.get(), o.border, &p, &s),
          "scoring " + job.input.string());
    line["psnr"] = number_or_null(p);
    line["ssim"] = s;
  }
  if (o.crop_observed) {
    rlsd_image* c = nullptr;
    check(rlsd_observed_region(restored.get(), k.get(), rlsd_image_height(y.get()), rlsd_image_width(y.get()), &c));
    restored.reset(c);
  }
  if (!job.output.empty()) {
    check(rlsd_image_save(restored.get(), job.output.string().c_str(), 0));
    line["output"] = job.output.string();
  }
  return line;
}

int cmd_deblur(const DeblurOptions& o) {
  Model model = load_model(o.checkpoint, o.config, o.seed);
  if (o.cg_max > 0 || o.cg_tol > 0.0) check(rlsd_model_set_solver(model.get(), o.cg_max, o.cg_tol));
  const std::vector<Job> jobs = plan_jobs(o);

  std::vector<std::optional<nlohmann::json>> lines(jobs.size());
  std::vector<std::optional<Failure>> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < jobs.size();) {
      try {
        lines[i] = run_job(model.get(), jobs[i], o);
      } catch (const Failure& f) {
        errors[i] = f;
      }
    }
  };
  std::vector<std::thread> pool;
  const std::size_t n = std::max<std::size_t>(1, std::min(o.workers, jobs.size()));
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  int code = kExitOk;
  double psnr_sum = 0.0;
  std::size_t scored = 0;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    if (errors[i]) {
      std::cerr << "rlsd: " << errors[i]->message << "\n";
      code = std::max(code, exit_code(errors[i]->status));
      continue;
    }
    std::cout << lines[i]->dump() << "\n";
    if (lines[i]->contains("psnr") && (*lines[i])["psnr"].is_number()) {
      psnr_sum += (*lines[i])["psnr"].get<double>();
      ++scored;
    }
  }
  if (jobs.size() > 1 && scored > 0) {
    std::cout << nlohmann::json{{"images", scored}, {"mean_psnr", psnr_sum / static_cast<double>(scored)}}.dump()
              << "\n";
  }
  return code;
}

// ---------------------------------------------------------------- others

void print_progress(const char* message, void*) { std::cerr << message << std::endl; }

int cmd_train(const std::string& config, const std::string& out, std::size_t epochs) {
  check(rlsd_train(or_null(config), out.c_str(), epochs, print_progress, nullptr));
  std::cout << (fs::path(out) / "latest.rlsd").string() << "\n";
  return kExitOk;
}

int cmd_synthesize(const std::string& config, std::size_t count, std::size_t size, std::uint64_t seed,
                   const std::string& out) {
  CString manifest;
  check(rlsd_synthesize(or_null(config), count, size, seed, out.c_str(), &manifest.p));
  write_text((fs::path(out) / "manifest.jsonl").string(), manifest.str());
  std::cout << manifest.str();
  return kExitOk;
}

int cmd_grad_check(std::uint64_t seed) {
  int passed = 0;
  CString report;
  check(rlsd_grad_check(seed, &passed, &report.p));
  std::cout << report.str();
  std::cout << nlohmann::json{{"pass", passed == 1}}.dump() << "\n";
  return passed ? kExitOk : kExitNumerical;
}

int cmd_bench(const std::string& checkpoint, const std::string& config, std::size_t size, std::size_t kernel,
              std::size_t repeats, std::uint64_t seed) {
  Model model = load_model(checkpoint, config, seed);
  CString json;
  check(rlsd_bench(model.get(), size, kernel, repeats, seed, &json.p));
  std::cout << json.str() << "\n";
  return kExitOk;
}

int cmd_convergence(const std::string& checkpoint, const std::string& config, std::size_t images, std::size_t size,
                    std::uint64_t seed, const std::vector<std::size_t>& steps, const std::vector<int>& caps,
                    const std::string& output) {
  Model model = load_model(checkpoint, config, seed);
  CString csv;
  check(rlsd_convergence(model.get(), or_null(config), images, size, seed, steps.data(), steps.size(), caps.data(),
                         caps.size(), &csv.p));
  if (!output.empty()) write_text(output, csv.str());
  std::cout << csv.str();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Matrix-free non-blind deconvolution with learned reweighted least squares"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(rlsd_version()));

  DeblurOptions d;
  auto* deblur = app.add_subcommand("deblur", "Restore a blurred image (or a directory of them)");
  deblur->add_option("--input,-i", d.input, "Blurred PNG or directory of PNGs")->required();
  deblur->add_option("--kernel,-k", d.kernel, "PSF file (.txt or .png), or a directory with one per image")
      ->required();
  deblur->add_option("--checkpoint,-c", d.checkpoint, "Trained model");
  deblur->add_option("--config", d.config, "INI file for an untrained model when no checkpoint is given");
  deblur->add_option("--output,-o", d.output, "Output PNG (directory for directory input)");
  deblur->add_option("--sigma", d.sigma, "Noise std in [0,1] units; estimated from the image when omitted")
      ->check(CLI::PositiveNumber);
  deblur->add_option("--steps", d.steps, "Total steps including the Wiener step (default: trained count)")
      ->check(CLI::PositiveNumber);
  deblur->add_option("--cg-max", d.cg_max, "Forward CG iteration cap")->check(CLI::PositiveNumber);
  deblur->add_option("--cg-tol", d.cg_tol, "Forward CG relative tolerance")->check(CLI::Range(0.0, 1.0));
  deblur->add_option("--trace", d.trace, "Write the per-step trace JSON here (directory for directory input)");
  deblur->add_option("--ground-truth", d.ground_truth, "Sharp latent-size image (or directory) for scoring");
  deblur->add_option("--border", d.border, "Pixels discarded on each side when scoring");
  deblur->add_flag("--crop-observed", d.crop_observed, "Save only the region covered by the observation");
  deblur->add_option("--workers", d.workers, "Parallel images for directory input")->check(CLI::PositiveNumber);
  deblur->add_option("--seed", d.seed, "Seed for an untrained model");

  std::string config, out, checkpoint, output;
  std::size_t epochs = 0, count = 10, size = 0, kernel_size = 25, repeats = 3, images = 10;
  std::uint64_t seed = 1;
  std::vector<std::size_t> step_counts{1, 2, 3, 4, 5, 6, 8, 10, 12, 15, 20};
  std::vector<int> caps{25, 75, 250, 500};

  auto* trn = app.add_subcommand("train", "Train a model, resuming from <out>/latest.rlsd if present");
  trn->add_option("--config", config, "INI file (default: built-in desk settings)");
  trn->add_option("--out,-o", out, "Checkpoint directory")->required();
  trn->add_option("--epochs", epochs, "Override the configured epoch count");

  auto* syn = app.add_subcommand("synthesize", "Write synthetic sharp/blurred/kernel triples");
  syn->add_option("--config", config, "INI file whose [data] section drives the synthesis");
  syn->add_option("--count,-n", count, "Number of cases")->check(CLI::PositiveNumber);
  syn->add_option("--size", size, "Sharp image size (default: [data] crop)");
  syn->add_option("--seed", seed, "Random seed");
  syn->add_option("--out,-o", out, "Output directory")->required();

  auto* gc = app.add_subcommand("grad-check", "Finite-difference audit of the implicit gradients");
  gc->add_option("--seed", seed, "Random seed");

  auto* bench = app.add_subcommand("bench", "Time restoration and one training gradient");
  bench->add_option("--checkpoint,-c", checkpoint, "Trained model (default: fresh model from --config)");
  bench->add_option("--config", config, "INI file");
  bench->add_option("--size", size, "Latent image size")->default_val(64);
  bench->add_option("--kernel-size", kernel_size, "Odd blur size");
  bench->add_option("--repeats", repeats, "Timing repeats")->check(CLI::PositiveNumber);
  bench->add_option("--seed", seed, "Random seed");

  auto* conv = app.add_subcommand("convergence", "PSNR and CG work per step count and CG cap (CSV)");
  conv->add_option("--checkpoint,-c", checkpoint, "Trained model (default: fresh model from --config)");
  conv->add_option("--config", config, "INI file; its [data] section drives the test set");
  conv->add_option("--images", images, "Test images")->check(CLI::PositiveNumber);
  conv->add_option("--size", size, "Latent image size (default: [data] crop)");
  conv->add_option("--steps", step_counts, "Step counts")->delimiter(',');
  conv->add_option("--cg-max", caps, "Forward CG caps")->delimiter(',');
  conv->add_option("--seed", seed, "Random seed");
  conv->add_option("--output,-o", output, "Also write the CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUser;
  }

  try {
    if (*deblur) return cmd_deblur(d);
    if (*trn) return cmd_train(config, out, epochs);
    if (*syn) return cmd_synthesize(config, count, size, seed, out);
    if (*gc) return cmd_grad_check(seed);
    if (*bench) return cmd_bench(checkpoint, config, size, kernel_size, repeats, seed);
    if (*conv) return cmd_convergence(checkpoint, config, images, size, seed, step_counts, caps, output);
  } catch (const Failure& f) {
    std::cerr << "rlsd: " << f.message << "\n";
    return exit_code(f.status);
  } catch (const std::exception& e) {
    std::cerr << "rlsd: " << e.what() << "\n";
    return kExitUser;
  }
  return kExitUser;
}
