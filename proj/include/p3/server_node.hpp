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
#include <filesystem>
#include <memory>

#include "p3/metrics.hpp"
#include "p3/server.hpp"
#include "p3/transport.hpp"

namespace p3 {

struct ServerConfig {
  Endpoint listen{"127.0.0.1", 0};
  uint32_t rank = 0;
  SlicePlan plan;
  uint16_t num_workers = 1;
  float lr = kDefaultLearningRate;
  double throttle_bits_per_sec = 0;
  uint64_t burst_bytes = kDefaultBurstBytes;
  /// digest.txt, shards.bin and net_util.csv go here when set.
  std::filesystem::path output_dir;
  std::chrono::milliseconds sample_period = kDefaultSamplePeriod;
  /// Upper bound on waiting for workers to connect.
  std::chrono::milliseconds accept_timeout{60000};
};

/// One server process: accepts num_workers connections, feeds their frames
/// through a ServerInbox to a single consumer running the ServerEngine, and
/// sends responses through one sender thread per worker. run() returns once
/// every worker has sent FIN.
class ServerNode {
 public:
  /// Binds the listening socket immediately so port() is known before run().
  explicit ServerNode(ServerConfig config);
  ~ServerNode();

  uint16_t port() const { return listener_.port(); }

  /// Throws ProtocolError / TimeoutError on failure.
  void run();

  const ServerEngine& engine() const { return engine_; }
  const ByteCounters& counters() const { return counters_; }

 private:
  struct Peer;

  void fail(std::exception_ptr error);
  void write_outputs(const Sampler& sampler) const;

  ServerConfig config_;
  ServerEngine engine_;
  Listener listener_;
  TokenBucket egress_;
  ByteCounters counters_;
  ServerInbox inbox_;
  std::vector<std::unique_ptr<Peer>> peers_;  // indexed by worker rank

  std::mutex err_mu_;
  std::exception_ptr error_;
};

}  // namespace p3
