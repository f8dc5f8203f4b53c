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

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "p3/digest.hpp"
#include "p3/gradgen.hpp"
#include "p3/plan.hpp"
#include "p3/proto.hpp"
#include "p3/queue.hpp"

namespace p3 {

/// A pending outbound message of the worker: the gradient PUSH of a slice or,
/// in baseline mode, the PULL that follows a NOTIFY.
struct SendItem {
  Slice slice;
  uint64_t iteration = 0;
  MsgType type = MsgType::push;
};

/// Outbox order: compare_priority in p3 mode, FIFO in baseline mode.
struct SendOrder {
  SyncMode mode = SyncMode::p3;

  bool operator()(const SendItem& a, const SendItem& b) const {
    if (mode == SyncMode::baseline) return false;
    return compare_priority(a.slice, b.slice) < 0;
  }
};

using Outbox = BlockingPriorityQueue<SendItem, SendOrder>;

/// Hands every slice of a finished layer to the outbound queues. In p3 mode
/// all slices enter the single priority outbox atomically; in baseline mode
/// each slice is appended to the FIFO of its server in slice order.
void enqueue_layer(const SlicePlan& plan, uint32_t layer_index, uint64_t iteration,
                   std::span<Outbox* const> queues);

/// The PUSH frame for one slice, payload filled from the gradient generator.
Frame make_push(const GradGen& gen, uint16_t rank, const Slice& slice,
                uint64_t iteration);
Frame make_pull(uint16_t rank, const Slice& slice, uint64_t iteration);

enum class WaitResult { ok, timeout, aborted };

/// The worker's local copy of the parameters. Version v of a layer is the
/// state after v updates; a layer reaches v + 1 once the BCAST of every one of
/// its slices tagged with iteration v has been applied.
class ParamStore {
 public:
  using Clock = std::chrono::steady_clock;

  explicit ParamStore(const SlicePlan& plan);

  /// Applies a BCAST. Returns true if it completed a layer version. Throws
  /// ProtocolError for unknown slices, wrong iterations, or a slice that was
  /// already received for this version.
  bool apply(const Frame& bcast);

  uint64_t version(uint32_t layer) const;
  WaitResult wait_version(uint32_t layer, uint64_t version, Clock::time_point deadline);
  WaitResult wait_all(uint64_t version, Clock::time_point deadline);

  /// When every layer first reached `version`, if it has.
  std::optional<Clock::time_point> all_reached_at(uint64_t version) const;

  /// True if every slice of `layer` currently holds `version` parameters.
  bool layer_at_version(uint32_t layer, uint64_t version) const;

  /// Wakes every waiter with WaitResult::aborted.
  void abort();

  /// Layers below `version` and the slices they still miss.
  std::string pending_report(uint64_t version) const;

  ModelParams snapshot() const;
  uint64_t digest() const;
  uint32_t num_layers() const { return static_cast<uint32_t>(params_.size()); }

 private:
  const SlicePlan& plan_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  ModelParams params_;
  std::vector<uint64_t> version_;
  std::vector<std::vector<uint64_t>> slice_version_;
  std::vector<uint32_t> received_;  // slices of the pending version, per layer
  std::vector<uint32_t> layers_at_;  // layers_at_[v]: layers that reached v
  std::vector<std::optional<Clock::time_point>> reached_at_;
  bool aborted_ = false;
};

/// Wall-clock phase boundaries of one iteration, microseconds since run start.
/// sync_end is when every layer held the parameters for the next iteration.
struct IterationMetrics {
  uint64_t fwd_start_us = 0;
  uint64_t fwd_end_us = 0;
  uint64_t bwd_start_us = 0;
  uint64_t bwd_end_us = 0;
  uint64_t sync_end_us = 0;
};

/// Per-iteration wall times: from one forward start to the next, and for the
/// final iteration up to its sync_end.
std::vector<double> iteration_wall_ms(std::span<const IterationMetrics> metrics);

}  // namespace p3
