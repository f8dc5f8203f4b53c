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
#include <stdexcept>
#include <string>
#include <vector>

#include "p3/metrics.hpp"
#include "p3/run_config.hpp"

namespace p3 {

/// A bench child failed or the run timed out. exit_code follows ExitCode.
class BenchError : public std::runtime_error {
 public:
  BenchError(int exit_code, const std::string& what)
      : std::runtime_error(what), exit_code_(exit_code) {}
  int exit_code() const { return exit_code_; }

 private:
  int exit_code_;
};

struct BenchResult {
  std::filesystem::path dir;
  ThroughputReport report;
  std::vector<uint64_t> worker_digests;
  /// Digest of the model reassembled from every server's shards.
  uint64_t server_digest = 0;
  std::vector<double> worker_idle;
  double idle_fraction = 0;
  uint64_t idle_threshold = 0;
  double elapsed_s = 0;
};

/// Runs servers() server processes and num_workers worker processes of
/// `exe` on loopback, waits for all of them and merges their outputs into
/// config.output_dir. Every child is killed and reaped before this returns
/// or throws. Throws BenchError.
BenchResult run_bench(const RunConfig& config, const std::filesystem::path& exe,
                      std::chrono::seconds timeout = std::chrono::seconds(600));

/// Rebuilds the result of a finished bench from its output directory.
BenchResult read_bench_dir(const std::filesystem::path& dir, const RunConfig& config);

std::string bench_summary(const RunConfig& config, const BenchResult& result);

}  // namespace p3
