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

#include "rlsd/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>

#include "rlsd/errors.hpp"

namespace rlsd {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const noexcept {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

void on_png_error(png_structp png, png_const_charp msg) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = msg;
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

bool is_png(const fs::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png";
}

void encode_png(std::FILE* f, const std::string& name, png_uint_32 width, png_uint_32 height, int channels,
                int bit_depth, png_bytep* rows) {
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
  if (!png) throw IoError("libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("cannot encode '" + name + "': " + err);
  }
  png_init_io(png, f);
  png_set_IHDR(png, info, width, height, bit_depth, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor load_png(const fs::path& path) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open image '" + path.string() + "'");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
    throw IoError("'" + path.string() + "' is not a PNG file");

  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, on_png_error, on_png_warning);
  if (!png) throw IoError("libpng initialization failed");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows;
  std::vector<unsigned char> data;
  png_uint_32 width = 0, height = 0;
  int depth = 0, channels = 0;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("cannot decode '" + path.string() + "': " + err);
  }
  png_init_io(png, f.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // host little-endian samples
  png_read_update_info(png, info);
  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  depth = png_get_bit_depth(png, info);
  channels = png_get_channels(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  data.resize(rowbytes * height);
  rows.resize(height);
  for (png_uint_32 i = 0; i < height; ++i) rows[i] = data.data() + i * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (channels != 1 && channels != 3) throw IoError("'" + path.string() + "': unsupported channel count " + std::to_string(channels));
  Tensor out({static_cast<std::size_t>(channels), height, width});
  const double maxv = depth == 16 ? 65535.0 : 255.0;
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j)
      for (std::size_t c = 0; c < static_cast<std::size_t>(channels); ++c) {
        const std::size_t k = j * channels + c;
        const double v = depth == 16
                             ? static_cast<double>(reinterpret_cast<const std::uint16_t*>(rows[i])[k])
                             : static_cast<double>(rows[i][k]);
        out(c, i, j) = v / maxv;
      }
  return out;
}

void save_png(const fs::path& path, const Tensor& image_in, int requested_depth) {
  const Tensor image = as_image(image_in);
  const std::size_t channels = image.dim(0), height = image.dim(1), width = image.dim(2);
  if (channels != 1 && channels != 3) throw DimensionError("PNG output needs 1 or 3 channels, got " + shape_string(image_in.shape()));
  const int bit_depth = requested_depth != 0 ? requested_depth : (channels == 1 ? 16 : 8);
  if (bit_depth != 8 && bit_depth != 16) throw ParameterError("PNG bit depth must be 8 or 16");

  const double maxv = bit_depth == 16 ? 65535.0 : 255.0;
  const std::size_t bytes = bit_depth / 8;
  std::vector<unsigned char> data(height * width * channels * bytes);
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j)
      for (std::size_t c = 0; c < channels; ++c) {
        const double v = image(c, i, j);
        const auto q = static_cast<unsigned>(std::lround(std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 1.0) * maxv));
        unsigned char* p = data.data() + ((i * width + j) * channels + c) * bytes;
        if (bytes == 2) {
          p[0] = static_cast<unsigned char>(q >> 8);  // PNG is big-endian
          p[1] = static_cast<unsigned char>(q & 0xFF);
        } else {
          p[0] = static_cast<unsigned char>(q);
        }
      }

  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot write image '" + path.string() + "'");
  std::vector<png_bytep> rows(height);
  for (std::size_t i = 0; i < height; ++i) rows[i] = data.data() + i * width * channels * bytes;
  encode_png(f.get(), path.string(), static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
             static_cast<int>(channels), bit_depth, rows.data());
  if (std::fflush(f.get()) != 0) throw IoError("failed writing image '" + path.string() + "'");
}

std::vector<fs::path> list_pngs(const fs::path& dir) {
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
      if (is_png(e.path())) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Tensor convert_channels(const Tensor& image_in, std::size_t channels) {
  const Tensor image = as_image(image_in);
  if (image.dim(0) == channels) return image;
  const std::size_t h = image.dim(1), w = image.dim(2), plane = h * w;
  if (image.dim(0) == 3 && channels == 1) {
    Tensor out({1, h, w});
    for (std::size_t i = 0; i < plane; ++i)
      out[i] = 0.299 * image[i] + 0.587 * image[plane + i] + 0.114 * image[2 * plane + i];
    return out;
  }
  if (image.dim(0) == 1 && channels == 3) {
    Tensor out({3, h, w});
    for (std::size_t c = 0; c < 3; ++c) std::copy_n(image.data(), plane, out.data() + c * plane);
    return out;
  }
  throw DimensionError("cannot convert " + shape_string(image_in.shape()) + " to " + std::to_string(channels) +
                       " channel(s)");
}

BlurKernel load_kernel_file(const fs::path& path) {
  if (!is_png(path)) return load_kernel(path);
  const Tensor img = load_png(path);
  if (img.dim(0) != 1) throw IoError("kernel image '" + path.string() + "' must be grayscale");
  try {
    return BlurKernel::from_psf(img.reshaped({img.dim(1), img.dim(2)}));
  } catch (const std::exception& e) {
    throw IoError("kernel image '" + path.string() + "': " + e.what());
  }
}

void save_kernel_file(const fs::path& path, const BlurKernel& kernel) {
  if (!is_png(path)) return save_kernel(path, kernel);
  Tensor psf = kernel.to_psf();
  double peak = 0.0;
  for (double v : psf.values()) peak = std::max(peak, v);
  if (peak > 0.0) psf *= 1.0 / peak;
  save_png(path, psf.reshaped({1, psf.dim(0), psf.dim(1)}), 16);
}

}  // namespace rlsd
