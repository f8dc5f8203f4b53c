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

#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "p3/model.hpp"

namespace p3 {

enum class SyncMode : uint8_t { p3, baseline };

std::string_view to_string(SyncMode mode);
/// Accepts "p3" or "baseline".
std::optional<SyncMode> parse_sync_mode(std::string_view text);

inline constexpr uint64_t kDefaultMaxSlice = 50000;
inline constexpr uint64_t kDefaultBigThreshold = 1000000;

/// A layer index extended with the slice index inside that layer.
struct SliceKey {
  uint32_t layer_index = 0;
  uint32_t slice_index = 0;

  auto operator<=>(const SliceKey&) const = default;
};

/// Smaller value is more urgent. Equals the forward index of the layer.
struct Priority {
  uint32_t value = 0;

  auto operator<=>(const Priority&) const = default;
};

struct Slice {
  SliceKey key;
  uint64_t offset = 0;  // element offset into the layer's parameter vector
  uint64_t len = 0;
  Priority priority;
  uint32_t server = 0;

  bool operator==(const Slice&) const = default;
};

/// Total order used everywhere slices compete for a resource: priority value,
/// then layer index, then slice index.
std::strong_ordering compare_priority(Priority a_prio, SliceKey a_key,
                                      Priority b_prio, SliceKey b_key);

inline std::strong_ordering compare_priority(const Slice& a, const Slice& b) {
  return compare_priority(a.priority, a.key, b.priority, b.key);
}

/// Fixed synchronization plan: which slices exist, their priorities, and the
/// server owning each. Slices are stored sorted by key so the slices of one
/// layer are contiguous.
class SlicePlan {
 public:
  SlicePlan() = default;
  SlicePlan(SyncMode mode, std::vector<Slice> slices, uint32_t num_servers,
            uint64_t max_slice, uint64_t big_threshold, uint64_t rng_seed);

  SyncMode mode() const { return mode_; }
  std::span<const Slice> slices() const { return slices_; }
  uint32_t num_servers() const { return num_servers_; }
  uint32_t num_layers() const {
    return static_cast<uint32_t>(layer_begin_.empty() ? 0 : layer_begin_.size() - 1);
  }
  uint64_t max_slice() const { return max_slice_; }
  uint64_t big_threshold() const { return big_threshold_; }
  uint64_t rng_seed() const { return rng_seed_; }

  /// Slices of one layer in slice_index order; throws std::out_of_range for
  /// an unknown layer.
  std::span<const Slice> slices_of_layer(uint32_t layer_index) const;

  /// The slice with this key, or nullptr.
  const Slice* find(SliceKey key) const;

  uint64_t layer_param_count(uint32_t layer_index) const;

  bool operator==(const SlicePlan&) const = default;

 private:
  SyncMode mode_ = SyncMode::p3;
  std::vector<Slice> slices_;
  std::vector<size_t> layer_begin_;  // slices_ offsets, one past per layer
  uint32_t num_servers_ = 1;
  uint64_t max_slice_ = kDefaultMaxSlice;
  uint64_t big_threshold_ = kDefaultBigThreshold;
  uint64_t rng_seed_ = 0;
};

/// Every layer cut into ceil(P / max_slice) chunks (full chunks first, the
/// remainder last); slices assigned round-robin across servers in
/// (layer, slice) order.
SlicePlan make_p3_plan(const ModelProfile& profile, uint32_t num_servers,
                       uint64_t max_slice = kDefaultMaxSlice);

/// Layers below `big_threshold` go whole to a server drawn from a splitmix64
/// stream seeded with `rng_seed` (one draw per layer index); larger layers are
/// split into `num_servers` equal parts, part i on server i, remainder last.
SlicePlan make_baseline_plan(const ModelProfile& profile, uint32_t num_servers,
                             uint64_t big_threshold = kDefaultBigThreshold,
                             uint64_t rng_seed = 0);

std::vector<Slice> slices_of_layer(const SlicePlan& plan, uint32_t layer_index);

/// CSV with header "layer,slice,offset,len,priority,server".
std::string plan_to_csv(const SlicePlan& plan);

/// Reads plan_to_csv output back. The mode is supplied by the caller; the
/// server count is the largest server rank + 1 unless `num_servers` is given.
/// Coverage of every layer is re-validated.
SlicePlan plan_from_csv(std::string_view csv, SyncMode mode,
                        std::optional<uint32_t> num_servers = std::nullopt);

/// Throws std::invalid_argument if any layer is not covered exactly once by
/// contiguous slices, or (p3 mode) a slice exceeds max_slice.
void check_coverage(const SlicePlan& plan, const ModelProfile& profile);

}  // namespace p3
