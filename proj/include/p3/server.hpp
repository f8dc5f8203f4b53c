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
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

#include "p3/plan.hpp"
#include "p3/proto.hpp"
#include "p3/queue.hpp"

namespace p3 {

inline constexpr float kDefaultLearningRate = 0.1f;

enum class PushStatus { waiting, ready };

/// Server-side state of one key (slice): current parameters plus the
/// gradients pushed for the iteration in progress.
class ShardState {
 public:
  ShardState(const Slice& slice, std::vector<float> params, uint16_t num_workers,
             float lr);

  /// Stores a worker's gradient. Throws ProtocolError for a wrong iteration,
  /// a rank out of range, a duplicate push, or a length mismatch.
  PushStatus on_push(uint16_t worker_rank, uint64_t iteration,
                     std::vector<float> grad);

  bool ready() const { return pushed_ == num_workers_; }

  /// Averages the pending gradients in ascending rank order, applies one SGD
  /// step, clears them and advances the iteration. Throws ProtocolError if
  /// not every worker has pushed.
  std::span<const float> aggregate_and_update();

  const Slice& slice() const { return slice_; }
  SliceKey key() const { return slice_.key; }
  uint64_t iteration() const { return iteration_; }
  std::span<const float> params() const { return params_; }
  uint16_t num_workers() const { return num_workers_; }
  float lr() const { return lr_; }

 private:
  Slice slice_;
  std::vector<float> params_;
  std::vector<std::optional<std::vector<float>>> pending_;
  uint16_t num_workers_;
  uint16_t pushed_ = 0;
  uint64_t iteration_ = 0;
  float lr_;
};

/// Inbox order: compare_priority in p3 mode, arrival order in baseline mode.
struct FrameOrder {
  SyncMode mode = SyncMode::p3;

  bool operator()(const Frame& a, const Frame& b) const {
    if (mode == SyncMode::baseline) return false;
    return compare_priority(Priority{a.priority}, a.key(), Priority{b.priority},
                            b.key()) < 0;
  }
};

using ServerInbox = BlockingPriorityQueue<Frame, FrameOrder>;

/// A frame addressed to one worker.
struct Outgoing {
  uint16_t worker_rank = 0;
  Frame frame;
};

/// Protocol logic of one server rank, independent of sockets. Owns a
/// ShardState for every plan slice assigned to this rank. Not thread-safe
/// except for worker registration: one consumer drives handle().
class ServerEngine {
 public:
  ServerEngine(const SlicePlan& plan, uint32_t server_rank, uint16_t num_workers,
               float lr = kDefaultLearningRate);

  SyncMode mode() const { return mode_; }
  uint32_t rank() const { return rank_; }
  uint16_t num_workers() const { return num_workers_; }

  /// Records a HELLO. Throws ProtocolError for a duplicate or out-of-range rank.
  void register_worker(uint16_t rank);
  bool all_registered() const;

  /// Handles a PUSH or PULL and returns the frames to send in response.
  std::vector<Outgoing> handle(Frame frame);

  /// One BCAST of the updated parameters per worker (p3 mode).
  std::vector<Outgoing> dispatch_p3(const ShardState& shard) const;
  /// One payload-free NOTIFY per worker (baseline mode).
  std::vector<Outgoing> dispatch_baseline(const ShardState& shard) const;
  /// BCAST of the current parameters to the requesting worker only.
  std::vector<Outgoing> on_pull(const Frame& pull) const;

  const ShardState* shard(SliceKey key) const;
  std::vector<const ShardState*> shards() const;

  /// FNV-1a over this rank's shards in key order.
  uint64_t digest() const;

  /// Binary dump of every shard: per shard u32 layer, u32 slice, u64 offset,
  /// u64 len, then len float32 values (all little-endian).
  void write_shards(const std::filesystem::path& path) const;

 private:
  ShardState& shard_for(const Frame& frame);
  Frame param_frame(const ShardState& shard, MsgType type, uint16_t to) const;

  SyncMode mode_;
  uint32_t rank_;
  uint16_t num_workers_;
  std::map<SliceKey, ShardState> shards_;
  mutable std::mutex reg_mu_;
  std::vector<bool> registered_;
};

struct ShardDump {
  Slice slice;
  std::vector<float> values;
};

std::vector<ShardDump> read_shards(const std::filesystem::path& path);

}  // namespace p3
