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

#include <filesystem>
#include <vector>

#include "rlsd/linop.hpp"
#include "rlsd/tensor.hpp"

namespace rlsd {

// PNG to a C x H x W tensor in [0, 1] (C = 1 or 3). Grayscale and RGB at 8 or
// 16 bits are read as is; palettes are expanded and alpha is dropped.
Tensor load_png(const std::filesystem::path& path);

// Writes a 1- or 3-channel image, clamped to [0, 1]. bit_depth 0 picks 16
// for grayscale and 8 for RGB.
void save_png(const std::filesystem::path& path, const Tensor& image, int bit_depth = 0);

// *.png files directly inside `dir`, sorted by name.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

// Channel conversion: luma for 3 -> 1, replication for 1 -> 3.
Tensor convert_channels(const Tensor& image, std::size_t channels);

// Kernel files by extension: .png is read as a grayscale PSF and scaled to
// sum 1 (saved with its maximum at full scale); anything else uses the text
// format of load_kernel/save_kernel.
BlurKernel load_kernel_file(const std::filesystem::path& path);
void save_kernel_file(const std::filesystem::path& path, const BlurKernel& kernel);

}  // namespace rlsd
