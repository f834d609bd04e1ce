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
#include <string>

#include "rlsd/model.hpp"
#include "rlsd/training.hpp"

namespace rlsd {

// INI file with [model], [solver], [data] and [train] sections; see
// configs/README.md for the keys. Missing keys keep their defaults, unknown
// keys are rejected.
struct RunConfig {
  ModelConfig model;
  DataConfig data;
  TrainConfig train;
};

RunConfig parse_config(const std::string& text, const std::string& origin = "<string>");
RunConfig load_config(const std::filesystem::path& path);

// [model] and [solver] sections that parse back to the same ModelConfig.
std::string model_config_to_ini(const ModelConfig& cfg);
ModelConfig model_config_from_ini(const std::string& text);

}  // namespace rlsd
