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


#include "p3/run_config.hpp"

#include <fstream>
#include <stdexcept>

#include "p3/metrics.hpp"

namespace p3 {

RunConfig run_config_from_json(const nlohmann::json& doc, RunConfig c) {
  if (!doc.is_object()) throw std::invalid_argument("run config must be a JSON object");
  try {
    if (doc.contains("mode")) {
      const auto text = doc["mode"].get<std::string>();
      const auto mode = parse_sync_mode(text);
      if (!mode) throw std::invalid_argument("unknown mode '" + text + "'");
      c.mode = *mode;
    }
    c.profile = doc.value("profile", c.profile);
    c.scale_divisor = doc.value("scale_divisor", c.scale_divisor);
    c.num_workers = doc.value("num_workers", c.num_workers);
    c.num_servers = doc.value("num_servers", c.num_servers);
    c.max_slice = doc.value("max_slice", c.max_slice);
    c.big_threshold = doc.value("big_threshold", c.big_threshold);
    c.lr = doc.value("lr", c.lr);
    c.iterations = doc.value("iterations", c.iterations);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.skip_iterations = doc.value("skip_iterations", c.skip_iterations);
    c.throttle_bits_per_sec = doc.value("throttle_bits_per_sec", c.throttle_bits_per_sec);
    c.burst_bytes = doc.value("burst_bytes", c.burst_bytes);
    c.seed = doc.value("seed", c.seed);
    c.compute_scale = doc.value("compute_scale", c.compute_scale);
    c.idle_threshold_bytes = doc.value("idle_threshold_bytes", c.idle_threshold_bytes);
    c.timeout_ms = doc.value("timeout_ms", c.timeout_ms);
    c.output_dir = doc.value("output_dir", c.output_dir);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad run config: ") + e.what());
  }
  if (c.num_workers == 0) throw std::invalid_argument("num_workers must be >= 1");
  if (c.scale_divisor == 0) throw std::invalid_argument("scale_divisor must be >= 1");
  return c;
}

nlohmann::json run_config_to_json(const RunConfig& c) {
  return {{"mode", std::string(to_string(c.mode))},
          {"profile", c.profile},
          {"scale_divisor", c.scale_divisor},
          {"num_workers", c.num_workers},
          {"num_servers", c.num_servers},
          {"max_slice", c.max_slice},
          {"big_threshold", c.big_threshold},
          {"lr", c.lr},
          {"iterations", c.iterations},
          {"batch_size", c.batch_size},
          {"skip_iterations", c.skip_iterations},
          {"throttle_bits_per_sec", c.throttle_bits_per_sec},
          {"burst_bytes", c.burst_bytes},
          {"seed", c.seed},
          {"compute_scale", c.compute_scale},
          {"idle_threshold_bytes", c.idle_threshold_bytes},
          {"timeout_ms", c.timeout_ms},
          {"output_dir", c.output_dir}};
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return run_config_from_json(doc);
}

ModelProfile load_profile_ref(const std::string& ref) {
  if (std::filesystem::exists(ref)) return load_profile(ref);
  for (const auto& name : builtin_profile_names())
    if (name == ref) return builtin_profile(ref);
  throw ProfileError("no profile file or builtin named '" + ref + "'");
}

ModelProfile resolve_profile(const RunConfig& config) {
  ModelProfile p = load_profile_ref(config.profile);
  return config.scale_divisor > 1 ? scale_profile(p, config.scale_divisor) : p;
}

SlicePlan make_plan(const RunConfig& config, const ModelProfile& profile) {
  if (config.mode == SyncMode::p3)
    return make_p3_plan(profile, config.servers(), config.max_slice);
  return make_baseline_plan(profile, config.servers(), config.big_threshold, config.seed);
}

uint64_t idle_threshold(const RunConfig& config) {
  if (config.idle_threshold_bytes > 0) return config.idle_threshold_bytes;
  if (config.throttle_bits_per_sec <= 0) return 1;
  const double period_s = std::chrono::duration<double>(kDefaultSamplePeriod).count();
  return static_cast<uint64_t>(0.1 * config.throttle_bits_per_sec / 8.0 * period_s);
}

}  // namespace p3
