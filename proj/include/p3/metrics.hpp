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

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <thread>
#include <vector>

namespace p3 {

enum class Direction : uint8_t { in, out };

/// Cumulative byte counters at time `t_ms` since the start of the run.
struct Sample {
  uint64_t t_ms = 0;
  uint64_t bytes_in = 0;
  uint64_t bytes_out = 0;

  bool operator==(const Sample&) const = default;
};

inline constexpr std::chrono::milliseconds kDefaultSamplePeriod{10};

/// Per-process network byte counters, bumped by the transport on every
/// read/write. Safe for concurrent increments.
class ByteCounters {
 public:
  void record_bytes(Direction dir, uint64_t n) {
    (dir == Direction::in ? in_ : out_).fetch_add(n, std::memory_order_relaxed);
  }

  uint64_t bytes_in() const { return in_.load(std::memory_order_relaxed); }
  uint64_t bytes_out() const { return out_.load(std::memory_order_relaxed); }

  Sample snapshot(uint64_t t_ms) const { return {t_ms, bytes_in(), bytes_out()}; }

 private:
  std::atomic<uint64_t> in_{0};
  std::atomic<uint64_t> out_{0};
};

/// Periodic sampler: one Sample every `period`, stamped k * period. The
/// first sample (t = 0) is taken by start().
class Sampler {
 public:
  Sampler(const ByteCounters& counters,
          std::chrono::milliseconds period = kDefaultSamplePeriod);
  ~Sampler();

  Sampler(const Sampler&) = delete;
  Sampler& operator=(const Sampler&) = delete;

  void start();
  /// Takes a final sample and joins the sampling thread.
  void stop();

  /// Valid after stop().
  const std::vector<Sample>& samples() const { return samples_; }

 private:
  const ByteCounters& counters_;
  std::chrono::milliseconds period_;
  std::atomic<bool> running_{false};
  std::thread thread_;
  std::vector<Sample> samples_;
};

struct ThroughputReport {
  double samples_per_second = 0;
  uint32_t skip_iterations = 0;
  uint32_t measure_iterations = 0;
  double window_seconds = 0;
  std::vector<double> wall_ms;
};

inline constexpr uint32_t kDefaultSkipIterations = 5;

/// Training throughput over the iterations after `skip`:
///   samples/s = measure * batch_size * num_workers / window seconds.
/// `measure` defaults to every remaining iteration. Throws
/// std::invalid_argument for an empty window or a run that is too short.
ThroughputReport throughput(std::span<const double> wall_ms, uint32_t skip,
                            std::optional<uint32_t> measure, uint32_t batch_size,
                            uint32_t num_workers);

/// Share of sample intervals whose combined in+out byte delta is below
/// `threshold_bytes`, counted between the first and last interval with any
/// traffic. A run with no traffic at all is fully idle (1.0).
double idle_fraction(std::span<const Sample> samples, uint64_t threshold_bytes);

void write_net_util_csv(const std::filesystem::path& path,
                        std::span<const Sample> samples);
std::vector<Sample> read_net_util_csv(const std::filesystem::path& path);

void write_throughput_csv(const std::filesystem::path& path,
                          std::span<const double> wall_ms);
std::vector<double> read_throughput_csv(const std::filesystem::path& path);

}  // namespace p3
