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


// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <sys/wait.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include "p3/bench.hpp"
#include "p3/digest.hpp"
#include "p3/errors.hpp"
#include "p3/sim.hpp"
#include "p3/transport.hpp"
#include "support.hpp"

#if !defined(P3_SOURCE_DIR) || !defined(P3_CLI_PATH) || !defined(P3_UNIT_TESTS_PATH)
#error "P3_SOURCE_DIR, P3_CLI_PATH and P3_UNIT_TESTS_PATH must be defined"
#endif

namespace fs = std::filesystem;
using namespace p3;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kRoot = P3_SOURCE_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("p3_acceptance_" + name);
  fs::remove_all(dir);
  return dir;
}

sim::Timeline run_scenario(const std::string& file, sim::Policy policy) {
  sim::Scenario sc = sim::load_scenario(kRoot / "scenarios" / file);
  sc.policy = policy;
  return sim::simulate(sc);
}

Outcome three_layer_delays() {
  const uint64_t coarse = sim::inter_iteration_delay(
      run_scenario("fig4.json", sim::Policy::aggressive_coarse));
  const uint64_t sliced = sim::inter_iteration_delay(
      run_scenario("fig4.json", sim::Policy::priority_sliced));
  std::ostringstream os;
  os << "delay coarse=" << coarse << " priority_sliced=" << sliced << " (want 4, 2)";
  return {coarse == 4 && sliced == 2, os.str()};
}

Outcome uneven_layer_makespans() {
  const sim::Timeline coarse = run_scenario("fig6.json", sim::Policy::aggressive_coarse);
  const sim::Timeline sliced = run_scenario("fig6.json", sim::Policy::aggressive_sliced);
  // The last three ticks are downlink-only: the downlink is busy throughout
  // and neither the uplink nor the update stage runs past makespan - 3.
  const auto down = sim::busy_intervals(coarse, sim::Resource::downlink);
  const uint64_t tail_start = coarse.makespan - 3;
  bool tail = !down.empty() && down.back().first <= tail_start &&
              down.back().second == coarse.makespan;
  for (sim::Resource r : {sim::Resource::uplink, sim::Resource::update}) {
    const auto busy = sim::busy_intervals(coarse, r);
    tail = tail && !busy.empty() && busy.back().second <= tail_start;
  }
  std::ostringstream os;
  os << "makespan coarse=" << coarse.makespan << " sliced=" << sliced.makespan
     << " (want 10, 7); coarse downlink last busy ["
     << (down.empty() ? 0 : down.back().first) << ','
     << (down.empty() ? 0 : down.back().second) << ")";
  return {coarse.makespan == 10 && sliced.makespan == 7 && tail, os.str()};
}

Outcome cross_mode_equality() {
  const auto t0 = Clock::now();
  std::ostringstream os;
  bool ok = true;
  int runs = 0;
  for (const auto& [name, scale] : {std::pair<std::string, uint32_t>{"toy3", 1},
                                    std::pair<std::string, uint32_t>{"vgg19-like", 100}}) {
    for (uint16_t workers : {1, 2, 4}) {
      RunConfig c;
      c.profile = name;
      c.scale_divisor = scale;
      c.num_workers = workers;
      c.iterations = 10;
      c.lr = 0.1f;
      c.compute_scale = 0;
      c.skip_iterations = 0;
      const ModelProfile profile = resolve_profile(c);
      const uint64_t oracle =
          params_digest(testing::expected_params(profile, workers, c.iterations, c.lr));
      for (SyncMode mode : {SyncMode::p3, SyncMode::baseline}) {
        c.mode = mode;
        c.output_dir = scratch(name + "_" + std::to_string(workers) + "_" +
                               std::string(to_string(mode)))
                           .string();
        const BenchResult r = run_bench(c, P3_CLI_PATH, std::chrono::seconds(60));
        ++runs;
        bool same = r.server_digest == oracle && r.worker_digests.size() == workers;
        for (uint64_t d : r.worker_digests) same = same && d == oracle;
        if (!same) {
          ok = false;
          os << name << " workers=" << workers << " mode=" << to_string(mode)
             << " server=" << digest_hex(r.server_digest) << " oracle=" << digest_hex(oracle)
             << "; ";
        }
        fs::remove_all(c.output_dir);
      }
    }
  }
  const double elapsed = seconds_since(t0);
  os << runs << " runs, every worker and server digest equal to the direct computation, "
     << elapsed << " s (limit 60 s)";
  return {ok && elapsed < 60.0, os.str()};
}

Outcome throttled_ordering_once() {
  RunConfig c;
  c.profile = "vgg19-like";
  c.scale_divisor = 100;
  c.num_workers = 2;
  c.iterations = 35;
  c.skip_iterations = 5;
  c.throttle_bits_per_sec = 200e6;
  c.compute_scale = 1.0;
  BenchResult r[2];
  const SyncMode modes[2] = {SyncMode::p3, SyncMode::baseline};
  for (int i = 0; i < 2; ++i) {
    c.mode = modes[i];
    c.output_dir = scratch(std::string("throttled_") + std::string(to_string(modes[i]))).string();
    r[i] = run_bench(c, P3_CLI_PATH, std::chrono::seconds(120));
    fs::remove_all(c.output_dir);
  }
  const double p3 = r[0].report.samples_per_second;
  const double base = r[1].report.samples_per_second;
  std::ostringstream os;
  os << "p3 " << p3 << " samples/s idle " << r[0].idle_fraction << "; baseline " << base
     << " samples/s idle " << r[1].idle_fraction << "; ratio " << p3 / base
     << " (want >= 1.05, lower p3 idle)";
  return {p3 >= 1.05 * base && r[0].idle_fraction < r[1].idle_fraction, os.str()};
}

Outcome throttled_ordering() {
  Outcome first = throttled_ordering_once();
  if (first.pass) return first;
  Outcome second = throttled_ordering_once();
  second.detail = "rerun after [" + first.detail + "]: " + second.detail;
  return second;
}

Outcome sweep_interior_minimum() {
  const sim::Scenario sc = sim::load_scenario(kRoot / "scenarios/sweep_huge_layer.json");
  std::vector<uint64_t> sizes;
  for (uint64_t s = 1; s <= 64; ++s) sizes.push_back(s);
  const auto points = sim::sweep_slice_size(sc, sizes);
  uint64_t best = UINT64_MAX, best_at = 0;
  for (const auto& p : points) {
    if (p.makespan < best) {
      best = p.makespan;
      best_at = p.slice_ticks;
    }
  }
  std::ostringstream os;
  os << "overhead=" << sc.per_slice_overhead << " makespan@1=" << points.front().makespan
     << " min=" << best << "@" << best_at << " makespan@64=" << points.back().makespan;
  return {sc.per_slice_overhead > 0 && points.front().makespan > best &&
              points.back().makespan > best,
          os.str()};
}

// The property suites live in the unit test binary; run exactly those.
Outcome property_suites() {
  const char* filter =
      "Wire.RoundTripRandomFrames:Wire.SplitStreamIdentity:"
      "PlanProperties.CoverageOverAllBuiltins:PlanProperties.Deterministic:"
      "PlanProperties.PriorityMonotoneInLayerIndex:"
      "ServerInbox.PriorityLinearizationUnderRandomInterleavings:"
      "ShardState.MatchesScalarOracle";
  constexpr int kExpected = 7;
  const std::string cmd =
      std::string(P3_UNIT_TESTS_PATH) + " --gtest_brief=1 --gtest_filter=" + filter + " 2>&1";
  const auto t0 = Clock::now();
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return {false, "cannot run the unit test binary"};
  std::string out;
  std::array<char, 4096> buf;
  size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
  const int st = ::pclose(pipe);
  const double elapsed = seconds_since(t0);
  const std::string passed = "[  PASSED  ] " + std::to_string(kExpected) + " test";
  const bool ok = WIFEXITED(st) && WEXITSTATUS(st) == 0 &&
                  out.find(passed) != std::string::npos && elapsed < 30.0;
  std::ostringstream os;
  os << kExpected << " suites, " << elapsed << " s (limit 30 s)";
  if (!ok) os << "\n" << out;
  return {ok, os.str()};
}

Outcome throttle_calibration() {
  constexpr uint64_t kBytes = 10'000'000;
  Listener l = Listener::bind({"127.0.0.1", 0});
  Frame f;
  f.type = MsgType::push;
  f.values.assign(kBytes / sizeof(float), 1.0f);
  std::optional<Frame> got;
  std::thread rx([&] {
    Connection c(l.accept(std::chrono::seconds(5)), nullptr, nullptr);
    got = c.recv();
  });
  TokenBucket bucket(8e6, kDefaultBurstBytes);
  Connection tx(connect_to({"127.0.0.1", l.port()}, std::chrono::seconds(5)), &bucket,
                nullptr);
  const auto t0 = Clock::now();
  tx.send(f);
  rx.join();
  const double elapsed = seconds_since(t0);
  std::ostringstream os;
  os << f.values.size() * sizeof(float) << " payload bytes at 8 Mbit/s in " << elapsed
     << " s (want 10 s +- 5%)";
  return {got && got->values.size() == f.values.size() && elapsed >= 9.5 && elapsed <= 10.5,
          os.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"1 three-layer-delays", three_layer_delays},
      {"2 uneven-layer-makespans", uneven_layer_makespans},
      {"3 cross-mode-bit-equality", cross_mode_equality},
      {"4 throttled-throughput-ordering", throttled_ordering},
      {"5 slice-sweep-interior-minimum", sweep_interior_minimum},
      {"6 property-suites", property_suites},
      {"7 throttle-calibration", throttle_calibration},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(),
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed,
              criteria.size());
  return failed == 0 ? 0 : 1;
}
