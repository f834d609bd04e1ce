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
#include <string>
#include <vector>

namespace rlsd {

// Finite-difference audit of the implicit gradients on small instances
// (12x12 latent, 3x3 blur, two 3x3 filters, tight solver tolerances).
struct GradCheckEntry {
  std::string name;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double tolerance = 1e-4;
  std::vector<GradCheckEntry> entries;

  double max_rel_err() const;
  bool passed() const { return max_rel_err() <= tolerance; }
  // One JSON object per entry.
  std::string to_jsonl() const;
};

// One adaptive layer with a convolutional weight predictor: probes beta,
// the filters, the previous estimate and every predictor tensor.
GradCheckReport grad_check_layer(std::uint64_t seed);
// The Wiener layer alone.
GradCheckReport grad_check_wiener(std::uint64_t seed);
// Wiener step plus two adaptive steps under the summed per-step MSE loss.
GradCheckReport grad_check_pipeline(std::uint64_t seed);
// All of the above.
GradCheckReport grad_check_all(std::uint64_t seed);

}  // namespace rlsd
