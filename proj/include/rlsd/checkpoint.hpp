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
#include <string>
#include <utility>
#include <vector>

#include "rlsd/model.hpp"
#include "rlsd/training.hpp"

namespace rlsd {

// Archive layout (little-endian):
//   "RLSD" | u32 version | u32 count
//   per tensor: u16 name length | name | u8 rank | u64 dims[rank] | f32 data
inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void write_archive(const std::filesystem::path& path, const NamedTensors& tensors);
NamedTensors read_archive(const std::filesystem::path& path);

// Rounds every value to the nearest f32, as stored on disk.
void quantize_f32(Tensor& t) noexcept;

// u64 as four 16-bit chunks, exact in f32.
Tensor encode_u64(std::uint64_t value);
std::uint64_t decode_u64(const Tensor& t);
// Bytes of a string, one per element.
Tensor encode_text(const std::string& text);
std::string decode_text(const Tensor& t);

struct TrainingState {
  std::uint64_t epoch = 0;  // completed epochs
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  AdamState adam;
};

void save_checkpoint(const std::filesystem::path& path, const RlsdnModel& model,
                     const TrainingState* state = nullptr);

struct LoadedCheckpoint {
  RlsdnModel model;
  std::optional<TrainingState> state;
};
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rlsd
