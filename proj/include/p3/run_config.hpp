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
#include <string>

#include "json.hpp"
#include "p3/model.hpp"
#include "p3/plan.hpp"
#include "p3/server.hpp"
#include "p3/transport.hpp"

namespace p3 {

/// Settings shared by every runtime subcommand. Loaded from JSON; every
/// field can be overridden on the command line.
struct RunConfig {
  SyncMode mode = SyncMode::p3;
  /// Path to a profile JSON file or the name of a builtin profile.
  std::string profile = "toy3";
  /// Parameter counts are divided by this before planning.
  uint64_t scale_divisor = 1;
  uint16_t num_workers = 1;
  /// 0 means one server per worker.
  uint32_t num_servers = 0;
  uint64_t max_slice = kDefaultMaxSlice;
  uint64_t big_threshold = kDefaultBigThreshold;
  float lr = kDefaultLearningRate;
  uint32_t iterations = 10;
  /// Only used to convert iterations into samples/s.
  uint32_t batch_size = 32;
  uint32_t skip_iterations = 5;
  /// Per-process egress limit; 0 disables shaping.
  double throttle_bits_per_sec = 0;
  uint64_t burst_bytes = kDefaultBurstBytes;
  /// Seeds the baseline plan's server choice.
  uint64_t seed = 0;
  double compute_scale = 1.0;
  /// Sample intervals with less traffic count as idle; 0 picks 10% of the
  /// throttled line rate per interval (or any traffic when unthrottled).
  uint64_t idle_threshold_bytes = 0;
  uint32_t timeout_ms = 60000;
  std::string output_dir = "out";

  uint32_t servers() const { return num_servers == 0 ? num_workers : num_servers; }
};

/// Applies the fields present in `doc` on top of `base`.
RunConfig run_config_from_json(const nlohmann::json& doc, RunConfig base = {});
nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig load_run_config(const std::filesystem::path& path);

/// Loads a profile file or builtin by name.
ModelProfile load_profile_ref(const std::string& ref);

/// The profile named by the config, scaled by scale_divisor.
ModelProfile resolve_profile(const RunConfig& config);

SlicePlan make_plan(const RunConfig& config, const ModelProfile& profile);

uint64_t idle_threshold(const RunConfig& config);

}  // namespace p3
