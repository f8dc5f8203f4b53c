// Copyright 2026 The p3sync Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace p3 {

/// Raised for unreadable, malformed, or invalid model profiles.
class ProfileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One layer of a declarative model. Durations are microseconds when the
/// profile drives the runtime and abstract ticks when it drives the simulator.
struct LayerSpec {
  uint32_t index = 0;
  std::string name;
  uint64_t param_count = 1;
  uint64_t fwd_time = 0;
  uint64_t bwd_time = 0;

  bool operator==(const LayerSpec&) const = default;
};

/// A model as an ordered list of layers (forward order). Immutable once
/// validated; shared read-only between threads.
struct ModelProfile {
  std::string name;
  std::vector<LayerSpec> layers;
  uint64_t seed = 0;

  bool operator==(const ModelProfile&) const = default;
};

/// Checks every profile invariant; throws ProfileError naming the layer.
void validate(const ModelProfile& profile);

uint64_t total_params(const ModelProfile& profile);

/// Index of the layer with the most parameters (first one on ties).
uint32_t heaviest_layer(const ModelProfile& profile);

/// Parses the JSON profile schema {name, seed, layers:[{index, name,
/// param_count, fwd_time, bwd_time}]}. Layers may appear in any order in the
/// document; duplicate or missing indices are rejected.
ModelProfile profile_from_json(const nlohmann::json& doc);
nlohmann::json profile_to_json(const ModelProfile& profile);

ModelProfile load_profile(const std::filesystem::path& path);
void save_profile(const ModelProfile& profile,
                  const std::filesystem::path& path);

/// Synthetic profiles: "toy3", "resnet50-like", "vgg19-like", "sockeye-like".
ModelProfile builtin_profile(std::string_view name);
const std::vector<std::string>& builtin_profile_names();

/// Divides every layer's parameter count by `divisor` (rounded to nearest,
/// at least 1). Durations are kept. Used to bring the builtins to desk scale.
ModelProfile scale_profile(const ModelProfile& profile, uint64_t divisor);

}  // namespace p3
