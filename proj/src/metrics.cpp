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

#include "p3/metrics.hpp"

#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

namespace p3 {

Sampler::Sampler(const ByteCounters& counters, std::chrono::milliseconds period)
    : counters_(counters), period_(period) {
  if (period_.count() <= 0) throw std::invalid_argument("sample period must be > 0");
}

Sampler::~Sampler() { stop(); }

void Sampler::start() {
  if (running_.exchange(true)) return;
  samples_.clear();
  samples_.push_back(counters_.snapshot(0));
  thread_ = std::thread([this] {
    const auto t0 = std::chrono::steady_clock::now();
    uint64_t k = 1;
    while (running_.load()) {
      std::this_thread::sleep_until(t0 + k * period_);
      if (!running_.load()) break;
      samples_.push_back(counters_.snapshot(k * static_cast<uint64_t>(period_.count())));
      ++k;
    }
    samples_.push_back(
        counters_.snapshot(k * static_cast<uint64_t>(period_.count())));
  });
}

void Sampler::stop() {
  if (!running_.exchange(false)) return;
  if (thread_.joinable()) thread_.join();
}

ThroughputReport throughput(std::span<const double> wall_ms, uint32_t skip,
                            std::optional<uint32_t> measure, uint32_t batch_size,
                            uint32_t num_workers) {
  if (measure && *measure == 0) throw std::invalid_argument("zero measure window");
  if (wall_ms.size() <= skip)
    throw std::invalid_argument("run of " + std::to_string(wall_ms.size()) +
                                " iterations leaves nothing after skipping " +
                                std::to_string(skip));
  const uint32_t n = measure.value_or(static_cast<uint32_t>(wall_ms.size() - skip));
  if (wall_ms.size() < static_cast<std::size_t>(skip) + n)
    throw std::invalid_argument("run of " + std::to_string(wall_ms.size()) +
                                " iterations is shorter than skip+measure");
  ThroughputReport r;
  r.skip_iterations = skip;
  r.measure_iterations = n;
  r.wall_ms.assign(wall_ms.begin(), wall_ms.end());
  const double window_ms =
      std::accumulate(wall_ms.begin() + skip, wall_ms.begin() + skip + n, 0.0);
  r.window_seconds = window_ms / 1000.0;
  if (r.window_seconds <= 0) throw std::invalid_argument("empty measurement window");
  r.samples_per_second = static_cast<double>(n) * batch_size * num_workers / r.window_seconds;
  return r;
}

double idle_fraction(std::span<const Sample> samples, uint64_t threshold_bytes) {
  if (samples.size() < 2) return 1.0;
  std::vector<uint64_t> delta(samples.size() - 1);
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const uint64_t prev = samples[i - 1].bytes_in + samples[i - 1].bytes_out;
    const uint64_t cur = samples[i].bytes_in + samples[i].bytes_out;
    delta[i - 1] = cur - prev;
  }
  std::size_t first = delta.size();
  std::size_t last = 0;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    if (delta[i] > 0) {
      if (first == delta.size()) first = i;
      last = i;
    }
  }
  if (first == delta.size()) return 1.0;
  std::size_t idle = 0;
  for (std::size_t i = first; i <= last; ++i) idle += delta[i] < threshold_bytes;
  return static_cast<double>(idle) / static_cast<double>(last - first + 1);
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return in;
}

}  // namespace

void write_net_util_csv(const std::filesystem::path& path,
                        std::span<const Sample> samples) {
  auto out = open_out(path);
  out << "t_ms,bytes_in,bytes_out\n";
  for (const Sample& s : samples)
    out << s.t_ms << ',' << s.bytes_in << ',' << s.bytes_out << '\n';
}

std::vector<Sample> read_net_util_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<Sample> out;
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Sample s;
    char c1 = 0, c2 = 0;
    std::istringstream ls(line);
    if (!(ls >> s.t_ms >> c1 >> s.bytes_in >> c2 >> s.bytes_out) || c1 != ',' || c2 != ',')
      throw std::runtime_error(path.string() + ": bad line '" + line + "'");
    out.push_back(s);
  }
  return out;
}

void write_throughput_csv(const std::filesystem::path& path,
                          std::span<const double> wall_ms) {
  auto out = open_out(path);
  out << "iteration,wall_ms\n";
  out.precision(6);
  out << std::fixed;
  for (std::size_t i = 0; i < wall_ms.size(); ++i) out << i << ',' << wall_ms[i] << '\n';
}

std::vector<double> read_throughput_csv(const std::filesystem::path& path) {
  auto in = open_in(path);
  std::vector<double> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error(path.string() + ": bad line '" + line + "'");
    out.push_back(std::stod(line.substr(comma + 1)));
  }
  return out;
}

}  // namespace p3
