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

/* C interface to the rlsdeconv library.
 *
 * Objects are opaque handles released with their *_free function. Every
 * call that can fail returns an rlsd_status; on failure rlsd_last_error()
 * describes the problem for the calling thread. Strings handed out by the
 * library are released with rlsd_string_free.
 *
 * Images are planar float64 in [0, 1]: channels x height x width. */

#ifndef RLSD_RLSD_H_
#define RLSD_RLSD_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define RLSD_API __declspec(dllexport)
#else
#define RLSD_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rlsd_status {
  RLSD_OK = 0,
  RLSD_INVALID_ARGUMENT = 1, /* bad parameter or configuration */
  RLSD_DIMENSION_ERROR = 2,  /* incompatible shapes */
  RLSD_IO_ERROR = 3,         /* file missing, unreadable or corrupt */
  RLSD_NUMERICAL_ERROR = 4,  /* solver breakdown, non-finite values */
  RLSD_INTERNAL_ERROR = 5
} rlsd_status;

typedef struct rlsd_image rlsd_image;
typedef struct rlsd_kernel rlsd_kernel;
typedef struct rlsd_model rlsd_model;
typedef struct rlsd_trace rlsd_trace;

RLSD_API const char* rlsd_version(void);
RLSD_API const char* rlsd_last_error(void);
RLSD_API const char* rlsd_status_name(rlsd_status status);
RLSD_API void rlsd_string_free(char* s);

/* ---- images */

RLSD_API rlsd_status rlsd_image_create(size_t channels, size_t height, size_t width, const double* data,
                                       rlsd_image** out);
RLSD_API rlsd_status rlsd_image_load(const char* path, rlsd_image** out);
/* bit_depth 0 picks 16 for grayscale and 8 for RGB. */
RLSD_API rlsd_status rlsd_image_save(const rlsd_image* image, const char* path, int bit_depth);
RLSD_API void rlsd_image_free(rlsd_image* image);
RLSD_API size_t rlsd_image_channels(const rlsd_image* image);
RLSD_API size_t rlsd_image_height(const rlsd_image* image);
RLSD_API size_t rlsd_image_width(const rlsd_image* image);
/* channels * height * width values, valid until the image is freed. */
RLSD_API const double* rlsd_image_data(const rlsd_image* image);
RLSD_API rlsd_status rlsd_image_convert(const rlsd_image* image, size_t channels, rlsd_image** out);

/* ---- kernels
 * Files are PNG (scaled to sum 1 on load) or text: "kh kw" then kh*kw
 * values. */

RLSD_API rlsd_status rlsd_kernel_create(size_t height, size_t width, const double* psf, rlsd_kernel** out);
RLSD_API rlsd_status rlsd_kernel_load(const char* path, rlsd_kernel** out);
RLSD_API rlsd_status rlsd_kernel_save(const rlsd_kernel* kernel, const char* path);
RLSD_API void rlsd_kernel_free(rlsd_kernel* kernel);
RLSD_API size_t rlsd_kernel_height(const rlsd_kernel* kernel);
RLSD_API size_t rlsd_kernel_width(const rlsd_kernel* kernel);

/* Valid blur plus optional Gaussian noise (sigma 0 disables it). */
RLSD_API rlsd_status rlsd_blur(const rlsd_image* image, const rlsd_kernel* kernel, double sigma, uint64_t seed,
                               rlsd_image** out);

/* ---- models */

/* config_path may be NULL for the built-in desk configuration. */
RLSD_API rlsd_status rlsd_model_create(const char* config_path, uint64_t seed, rlsd_model** out);
RLSD_API rlsd_status rlsd_model_load(const char* checkpoint_path, rlsd_model** out);
RLSD_API rlsd_status rlsd_model_save(const rlsd_model* model, const char* checkpoint_path);
RLSD_API void rlsd_model_free(rlsd_model* model);
RLSD_API size_t rlsd_model_steps(const rlsd_model* model);
RLSD_API size_t rlsd_model_channels(const rlsd_model* model);
/* Overrides the forward solver; max_iters <= 0 or rel_tol <= 0 keeps the current value. */
RLSD_API rlsd_status rlsd_model_set_solver(rlsd_model* model, int max_iters, double rel_tol);
/* The model's configuration as INI text. */
RLSD_API rlsd_status rlsd_model_describe(const rlsd_model* model, char** ini);

/* Restores `observed`. sigma <= 0 estimates the noise level from the
 * observation. steps counts every step including the Wiener one; 0 uses
 * the model's default. ground_truth (latent size) may be NULL; with it the
 * trace records per-step PSNR. trace may be NULL. */
RLSD_API rlsd_status rlsd_deblur(const rlsd_model* model, const rlsd_image* observed, const rlsd_kernel* kernel,
                                 double sigma, size_t steps, const rlsd_image* ground_truth, rlsd_image** restored,
                                 rlsd_trace** trace);

RLSD_API void rlsd_trace_free(rlsd_trace* trace);
RLSD_API size_t rlsd_trace_steps(const rlsd_trace* trace);
RLSD_API double rlsd_trace_sigma(const rlsd_trace* trace);
RLSD_API rlsd_status rlsd_trace_json(const rlsd_trace* trace, char** json);

/* ---- metrics */

RLSD_API rlsd_status rlsd_estimate_sigma(const rlsd_image* image, double* sigma);
/* PSNR (dB, +inf for identical images) and SSIM after discarding `border`
 * pixels on each side. Peak is 1. */
RLSD_API rlsd_status rlsd_score(const rlsd_image* restored, const rlsd_image* ground_truth, size_t border,
                                double* psnr, double* ssim);
/* Crop of a latent-size image matching the observation of a blur. */
RLSD_API rlsd_status rlsd_observed_region(const rlsd_image* latent, const rlsd_kernel* kernel, size_t height,
                                          size_t width, rlsd_image** out);

/* ---- experiments */

typedef void (*rlsd_progress_fn)(const char* message, void* user);

/* Trains per the INI file (NULL: desk defaults) into checkpoint_dir,
 * resuming from checkpoint_dir/latest.rlsd when present. epochs > 0
 * overrides the configured count. */
RLSD_API rlsd_status rlsd_train(const char* config_path, const char* checkpoint_dir, size_t epochs,
                                rlsd_progress_fn progress, void* user);

/* Writes `count` synthetic test cases (NNN_sharp.png, NNN_blurred.png,
 * NNN_kernel.txt) to out_dir using the [data] section of the config and
 * returns a JSON-lines manifest (file names and sigma). */
RLSD_API rlsd_status rlsd_synthesize(const char* config_path, size_t count, size_t size, uint64_t seed,
                                     const char* out_dir, char** manifest);

/* Finite-difference audit of all implicit gradients; JSON lines, one per
 * check. *passed is 1 when every relative error is within 1e-4. */
RLSD_API rlsd_status rlsd_grad_check(uint64_t seed, int* passed, char** report);

/* Mean PSNR and CG iterations per (step count, CG cap) on a seeded
 * synthetic set, as CSV with header "steps,cg_cap,psnr,mean_cg_iters". */
RLSD_API rlsd_status rlsd_convergence(const rlsd_model* model, const char* config_path, size_t images, size_t size,
                                      uint64_t seed, const size_t* step_counts, size_t n_steps, const int* cg_caps,
                                      size_t n_caps, char** csv);

/* Times forward restoration and one training gradient on a synthetic
 * size x size image; JSON object. */
RLSD_API rlsd_status rlsd_bench(const rlsd_model* model, size_t size, size_t kernel_size, size_t repeats,
                                uint64_t seed, char** json);

#ifdef __cplusplus
}
#endif

#endif /* RLSD_RLSD_H_ */
