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
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "p3/model.hpp"

namespace p3::sim {

/// Serial resources first; ties between events at the same tick are broken
/// by this id.
enum class Resource : uint8_t { compute = 0, uplink = 1, update = 2, downlink = 3 };

enum class Policy { aggressive_coarse, aggressive_sliced, priority_sliced };

enum class Kind : uint8_t { fwd, bwd, up, update, down };

std::string_view to_string(Resource r);
std::string_view to_string(Policy p);
Policy parse_policy(std::string_view text);

/// Cost of synchronizing one whole layer, in ticks.
struct StageCost {
  uint64_t up = 0;
  uint64_t update = 0;
  uint64_t down = 0;
};

/// Profile fwd_time/bwd_time are read as ticks.
struct Scenario {
  ModelProfile profile;
  std::vector<StageCost> costs;  // one per layer
  Policy policy = Policy::priority_sliced;
  /// Target chunk length for sliced policies: a layer is cut into
  /// ceil(max stage cost / slice_ticks) slices.
  uint64_t slice_ticks = 1;
  uint32_t num_iterations = 1;
  /// Added to the uplink and downlink time of every slice.
  uint64_t per_slice_overhead = 0;
  /// Serialize the update stage instead of running distinct slices
  /// concurrently.
  bool serial_update = false;
};

void validate(const Scenario& scenario);

Scenario scenario_from_json(const nlohmann::json& doc);
nlohmann::json scenario_to_json(const Scenario& scenario);
Scenario load_scenario(const std::filesystem::path& path);

struct Entry {
  Resource resource = Resource::compute;
  std::string item;
  uint64_t start = 0;
  uint64_t end = 0;
  uint32_t iteration = 0;
  uint32_t layer = 0;
  uint32_t slice = 0;
  Kind kind = Kind::fwd;

  bool operator==(const Entry&) const = default;
};

/// Entries sorted by (start, resource, item). Zero-length transfers and
/// updates are not recorded; zero-length compute steps are.
struct Timeline {
  std::vector<Entry> entries;
  uint64_t makespan = 0;

  bool operator==(const Timeline&) const = default;
};

/// Iteration model: backward of iteration 0, then for each iteration k the
/// synchronization of its gradients and the next forward pass, with the
/// backward of k + 1 following that forward. The last forward closes the run.
Timeline simulate(const Scenario& scenario);

/// Forward start of layer 0 in iteration k + 1 minus backward end of layer 0
/// in iteration k. Throws std::invalid_argument if either is missing.
uint64_t inter_iteration_delay(const Timeline& timeline, uint32_t iteration = 0);

/// Busy ticks of `resource` over [its first entry's start, makespan]; 0 for
/// a resource that never ran.
double link_utilization(const Timeline& timeline, Resource resource);

/// Busy intervals of a resource, adjacent intervals merged.
std::vector<std::pair<uint64_t, uint64_t>> busy_intervals(const Timeline& timeline,
                                                          Resource resource);

struct SweepPoint {
  uint64_t slice_ticks = 0;
  uint64_t makespan = 0;
};

/// One simulation per slice size, run in parallel.
std::vector<SweepPoint> sweep_slice_size(const Scenario& scenario,
                                         std::span<const uint64_t> sizes);

namespace reference {
std::vector<SweepPoint> sweep_slice_size(const Scenario& scenario,
                                         std::span<const uint64_t> sizes);
}  // namespace reference

void write_timeline_csv(std::ostream& out, const Timeline& timeline);
/// "makespan=.. delay=.. uplink_util=.. downlink_util=.." (delay=NA when the
/// timeline has no next forward pass).
std::string summary_line(const Timeline& timeline);

}  // namespace p3::sim
