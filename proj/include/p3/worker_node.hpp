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
#include <cstdint>
#include <filesystem>
#include <memory>
#include <vector>

#include "p3/metrics.hpp"
#include "p3/model.hpp"
#include "p3/transport.hpp"
#include "p3/worker.hpp"

namespace p3 {

struct WorkerConfig {
  uint16_t rank = 0;
  /// Server endpoints indexed by server rank.
  std::vector<Endpoint> servers;
  ModelProfile profile;
  SlicePlan plan;
  uint32_t iterations = 10;
  uint32_t batch_size = 32;
  double throttle_bits_per_sec = 0;
  uint64_t burst_bytes = kDefaultBurstBytes;
  /// Multiplies every fwd/bwd time of the profile; 0 skips compute entirely.
  double compute_scale = 1.0;
  /// throughput.csv, net_util.csv, phases.csv and digest.txt go here when set.
  std::filesystem::path output_dir;
  std::chrono::milliseconds sample_period = kDefaultSamplePeriod;
  std::chrono::milliseconds barrier_timeout{60000};
  std::chrono::milliseconds connect_timeout{30000};
};

/// One PUSH handed to the transport, as seen by the consumer at poll time.
struct SendRecord {
  SliceKey key;
  uint64_t iteration = 0;
  uint64_t t_us = 0;
  /// Items still queued behind it when it was polled.
  uint32_t queued = 0;
  /// compare_priority held against the new front of the queue.
  bool ordered = true;
};

struct WorkerResult {
  std::vector<IterationMetrics> phases;
  std::vector<double> wall_ms;
  std::vector<Sample> samples;
  std::vector<SendRecord> sends;
  uint64_t digest = 0;
  uint64_t bytes_out = 0;
  uint64_t bytes_in = 0;
};

/// One worker process: emulates fwd/bwd compute from the profile, pushes
/// synthetic gradients, and applies the parameters the servers send back.
class WorkerNode {
 public:
  explicit WorkerNode(WorkerConfig config);
  ~WorkerNode();

  /// Runs every iteration, sends FIN and waits for the servers to hang up.
  /// Throws ProtocolError or TimeoutError on failure.
  WorkerResult run();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

void write_phases_csv(const std::filesystem::path& path,
                      std::span<const IterationMetrics> phases);

}  // namespace p3
