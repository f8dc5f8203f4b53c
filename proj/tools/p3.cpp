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


// p3: plan, simulate, run and benchmark prioritized parameter synchronization.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

#include "CLI11.hpp"
#include "p3/bench.hpp"
#include "p3/errors.hpp"
#include "p3/run_config.hpp"
#include "p3/server_node.hpp"
#include "p3/sim.hpp"
#include "p3/worker_node.hpp"

namespace fs = std::filesystem;
using namespace p3;

namespace {

// RunConfig fields settable from the command line. Only flags that were
// actually given override the config file.
class Overrides {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& name, T RunConfig::*field,
                   const std::string& desc) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, desc);
    items_.push_back({opt, [value, field](RunConfig& c) { c.*field = *value; }});
    return opt;
  }

  CLI::Option* add_mode(CLI::App* app) {
    auto value = std::make_shared<std::string>();
    CLI::Option* opt = app->add_option("--mode", *value, "p3 or baseline")
                           ->check(CLI::IsMember({"p3", "baseline"}));
    items_.push_back({opt, [value](RunConfig& c) { c.mode = *parse_sync_mode(*value); }});
    return opt;
  }

  void apply(RunConfig& config) const {
    for (const auto& [opt, set] : items_)
      if (opt->count() > 0) set(config);
  }

 private:
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> items_;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<Endpoint> parse_servers(const std::string& list) {
  std::vector<Endpoint> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse_endpoint(item));
  if (out.empty()) throw std::invalid_argument("empty server list");
  return out;
}

SlicePlan load_plan(const fs::path& path, SyncMode mode, uint32_t num_servers) {
  return plan_from_csv(read_file(path), mode, num_servers);
}

void write_port_file(const fs::path& path, uint16_t port) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    out << port << '\n';
  }
  fs::rename(tmp, path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prioritized, sliced parameter synchronization: planner, simulator, "
               "parameter server, worker and local benchmark."};
  app.require_subcommand(1);

  std::string config_path;
  RunConfig defaults;

  // plan
  CLI::App* plan_cmd = app.add_subcommand("plan", "Print the slice plan of a profile as CSV");
  Overrides plan_ov;
  plan_cmd->add_option("--config", config_path, "RunConfig JSON file");
  plan_ov.add(plan_cmd, "--profile", &RunConfig::profile, "Profile file or builtin name");
  plan_ov.add_mode(plan_cmd);
  plan_ov.add(plan_cmd, "--scale", &RunConfig::scale_divisor, "Divide parameter counts");
  plan_ov.add(plan_cmd, "--num-servers", &RunConfig::num_servers, "Server count");
  plan_ov.add(plan_cmd, "--num-workers", &RunConfig::num_workers,
              "Worker count (default server count)");
  plan_ov.add(plan_cmd, "--max-slice", &RunConfig::max_slice, "Largest p3 slice");
  plan_ov.add(plan_cmd, "--big-threshold", &RunConfig::big_threshold,
              "Baseline split threshold");
  plan_ov.add(plan_cmd, "--seed", &RunConfig::seed, "Baseline placement seed");

  // simulate
  CLI::App* sim_cmd =
      app.add_subcommand("simulate", "Run the discrete-event simulator on a scenario");
  std::string scenario_path, policy;
  uint64_t slice_ticks = 0, overhead = 0;
  uint32_t sim_iterations = 0;
  std::vector<uint64_t> sweep;
  bool summary_only = false;
  sim_cmd->add_option("scenario", scenario_path, "Scenario JSON")->required();
  sim_cmd->add_option("--policy", policy, "Override the policy")
      ->check(CLI::IsMember({"aggressive-coarse", "aggressive-sliced", "priority-sliced"}));
  auto* slice_opt = sim_cmd->add_option("--slice-ticks", slice_ticks, "Override slice_ticks");
  auto* iter_opt = sim_cmd->add_option("--iterations", sim_iterations, "Override num_iterations");
  auto* over_opt =
      sim_cmd->add_option("--overhead", overhead, "Override per_slice_overhead");
  sim_cmd->add_option("--sweep", sweep, "Print makespan per slice size instead")
      ->delimiter(',');
  sim_cmd->add_flag("--summary-only", summary_only, "Print only the summary line");

  // server
  CLI::App* server_cmd = app.add_subcommand("server", "Run one parameter server");
  Overrides server_ov;
  std::string listen = "127.0.0.1:0", port_file, plan_path, out_dir;
  uint32_t rank = 0;
  server_cmd->add_option("--config", config_path, "RunConfig JSON file");
  server_cmd->add_option("--listen", listen, "host:port (port 0 picks one)");
  server_cmd->add_option("--port-file", port_file, "Write the bound port here");
  server_cmd->add_option("--rank", rank, "Server rank");
  server_cmd->add_option("--plan", plan_path, "Plan CSV (default: built from --profile)");
  server_cmd->add_option("--out", out_dir, "Output directory");
  server_ov.add_mode(server_cmd);
  server_ov.add(server_cmd, "--profile", &RunConfig::profile, "Profile file or builtin");
  server_ov.add(server_cmd, "--scale", &RunConfig::scale_divisor, "Divide parameter counts");
  server_ov.add(server_cmd, "--num-servers", &RunConfig::num_servers, "Server count");
  server_ov.add(server_cmd, "--num-workers", &RunConfig::num_workers, "Worker count");
  server_ov.add(server_cmd, "--lr", &RunConfig::lr, "Learning rate");
  server_ov.add(server_cmd, "--throttle", &RunConfig::throttle_bits_per_sec,
                "Egress limit, bits/s (0 = off)");
  server_ov.add(server_cmd, "--burst", &RunConfig::burst_bytes, "Token bucket burst, bytes");
  server_ov.add(server_cmd, "--timeout", &RunConfig::timeout_ms, "Accept timeout, ms");

  // worker
  CLI::App* worker_cmd = app.add_subcommand("worker", "Run one training worker");
  Overrides worker_ov;
  std::string server_list;
  uint16_t worker_rank = 0;
  worker_cmd->add_option("--config", config_path, "RunConfig JSON file");
  worker_cmd->add_option("--rank", worker_rank, "Worker rank");
  worker_cmd->add_option("--servers", server_list, "host:port list, server rank order")
      ->required();
  worker_cmd->add_option("--plan", plan_path, "Plan CSV (default: built from --profile)");
  worker_cmd->add_option("--out", out_dir, "Metrics output directory");
  worker_ov.add_mode(worker_cmd);
  worker_ov.add(worker_cmd, "--profile", &RunConfig::profile, "Profile file or builtin");
  worker_ov.add(worker_cmd, "--scale", &RunConfig::scale_divisor, "Divide parameter counts");
  worker_ov.add(worker_cmd, "--iterations", &RunConfig::iterations, "Iterations");
  worker_ov.add(worker_cmd, "--batch-size", &RunConfig::batch_size, "Samples per iteration");
  worker_ov.add(worker_cmd, "--throttle", &RunConfig::throttle_bits_per_sec,
                "Egress limit, bits/s (0 = off)");
  worker_ov.add(worker_cmd, "--burst", &RunConfig::burst_bytes, "Token bucket burst, bytes");
  worker_ov.add(worker_cmd, "--compute-scale", &RunConfig::compute_scale,
                "Multiplier on profile fwd/bwd times");
  worker_ov.add(worker_cmd, "--timeout", &RunConfig::timeout_ms, "Barrier timeout, ms");

  // bench
  CLI::App* bench_cmd =
      app.add_subcommand("bench", "Run servers and workers as local processes");
  Overrides bench_ov;
  bench_cmd->add_option("--config", config_path, "RunConfig JSON file");
  bench_ov.add_mode(bench_cmd);
  bench_ov.add(bench_cmd, "--profile", &RunConfig::profile, "Profile file or builtin");
  bench_ov.add(bench_cmd, "--scale", &RunConfig::scale_divisor, "Divide parameter counts");
  bench_ov.add(bench_cmd, "--workers", &RunConfig::num_workers, "Worker processes");
  bench_ov.add(bench_cmd, "--servers", &RunConfig::num_servers,
               "Server processes (default: one per worker)");
  bench_ov.add(bench_cmd, "--max-slice", &RunConfig::max_slice, "Largest p3 slice");
  bench_ov.add(bench_cmd, "--big-threshold", &RunConfig::big_threshold,
               "Baseline split threshold");
  bench_ov.add(bench_cmd, "--lr", &RunConfig::lr, "Learning rate");
  bench_ov.add(bench_cmd, "--iterations", &RunConfig::iterations, "Iterations");
  bench_ov.add(bench_cmd, "--batch-size", &RunConfig::batch_size, "Samples per iteration");
  bench_ov.add(bench_cmd, "--skip", &RunConfig::skip_iterations, "Warm-up iterations");
  bench_ov.add(bench_cmd, "--throttle", &RunConfig::throttle_bits_per_sec,
               "Egress limit per process, bits/s (0 = off)");
  bench_ov.add(bench_cmd, "--burst", &RunConfig::burst_bytes, "Token bucket burst, bytes");
  bench_ov.add(bench_cmd, "--seed", &RunConfig::seed, "Baseline placement seed");
  bench_ov.add(bench_cmd, "--compute-scale", &RunConfig::compute_scale,
               "Multiplier on profile fwd/bwd times");
  bench_ov.add(bench_cmd, "--idle-threshold", &RunConfig::idle_threshold_bytes,
               "Idle interval threshold, bytes");
  bench_ov.add(bench_cmd, "--timeout", &RunConfig::timeout_ms, "Barrier timeout, ms");
  bench_ov.add(bench_cmd, "--out", &RunConfig::output_dir, "Output directory");

  // report
  CLI::App* report_cmd = app.add_subcommand("report", "Summarize a finished bench directory");
  std::string report_dir;
  Overrides report_ov;
  report_cmd->add_option("dir", report_dir, "Bench output directory")->required();
  report_ov.add(report_cmd, "--skip", &RunConfig::skip_iterations, "Warm-up iterations");
  report_ov.add(report_cmd, "--batch-size", &RunConfig::batch_size, "Samples per iteration");
  report_ov.add(report_cmd, "--idle-threshold", &RunConfig::idle_threshold_bytes,
                "Idle interval threshold, bytes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  auto config_with = [&](const Overrides& ov) {
    RunConfig c = config_path.empty() ? defaults : load_run_config(config_path);
    ov.apply(c);
    return c;
  };

  try {
    if (*plan_cmd) {
      RunConfig c = config_with(plan_ov);
      const ModelProfile profile = resolve_profile(c);
      std::cout << plan_to_csv(make_plan(c, profile));
      return kExitOk;
    }

    if (*sim_cmd) {
      sim::Scenario sc = sim::load_scenario(scenario_path);
      if (!policy.empty()) sc.policy = sim::parse_policy(policy);
      if (*slice_opt) sc.slice_ticks = slice_ticks;
      if (*iter_opt) sc.num_iterations = sim_iterations;
      if (*over_opt) sc.per_slice_overhead = overhead;
      if (!sweep.empty()) {
        std::cout << "slice_ticks,makespan\n";
        for (const auto& p : sim::sweep_slice_size(sc, sweep))
          std::cout << p.slice_ticks << ',' << p.makespan << '\n';
        return kExitOk;
      }
      const sim::Timeline tl = sim::simulate(sc);
      if (!summary_only) sim::write_timeline_csv(std::cout, tl);
      std::cout << "# policy=" << sim::to_string(sc.policy) << ' ' << sim::summary_line(tl)
                << '\n';
      return kExitOk;
    }

    if (*server_cmd) {
      RunConfig c = config_with(server_ov);
      ServerConfig sc;
      sc.listen = parse_endpoint(listen);
      sc.rank = rank;
      sc.plan = plan_path.empty() ? make_plan(c, resolve_profile(c))
                                  : load_plan(plan_path, c.mode, c.servers());
      if (rank >= sc.plan.num_servers())
        throw std::invalid_argument("rank " + std::to_string(rank) + " but plan has " +
                                    std::to_string(sc.plan.num_servers()) + " servers");
      sc.num_workers = c.num_workers;
      sc.lr = c.lr;
      sc.throttle_bits_per_sec = c.throttle_bits_per_sec;
      sc.burst_bytes = c.burst_bytes;
      sc.output_dir = out_dir;
      sc.accept_timeout = std::chrono::milliseconds(c.timeout_ms);
      ServerNode node(std::move(sc));
      if (!port_file.empty()) write_port_file(port_file, node.port());
      std::fprintf(stderr, "server %u listening on port %u\n", rank, node.port());
      node.run();
      std::printf("server %u digest=%s\n", rank, digest_hex(node.engine().digest()).c_str());
      return kExitOk;
    }

    if (*worker_cmd) {
      RunConfig c = config_with(worker_ov);
      WorkerConfig wc;
      wc.rank = worker_rank;
      wc.servers = parse_servers(server_list);
      wc.profile = resolve_profile(c);
      RunConfig plan_cfg = c;
      plan_cfg.num_servers = static_cast<uint32_t>(wc.servers.size());
      wc.plan = plan_path.empty() ? make_plan(plan_cfg, wc.profile)
                                  : load_plan(plan_path, c.mode, plan_cfg.num_servers);
      check_coverage(wc.plan, wc.profile);
      wc.iterations = c.iterations;
      wc.batch_size = c.batch_size;
      wc.throttle_bits_per_sec = c.throttle_bits_per_sec;
      wc.burst_bytes = c.burst_bytes;
      wc.compute_scale = c.compute_scale;
      wc.output_dir = out_dir;
      wc.barrier_timeout = std::chrono::milliseconds(c.timeout_ms);
      wc.connect_timeout = std::chrono::milliseconds(c.timeout_ms);
      WorkerNode node(std::move(wc));
      const WorkerResult r = node.run();
      std::printf("worker %u digest=%s bytes_out=%llu bytes_in=%llu\n", worker_rank,
                  digest_hex(r.digest).c_str(),
                  static_cast<unsigned long long>(r.bytes_out),
                  static_cast<unsigned long long>(r.bytes_in));
      return kExitOk;
    }

    if (*bench_cmd) {
      RunConfig c = config_with(bench_ov);
      const BenchResult r = run_bench(c, "/proc/self/exe");
      std::cout << bench_summary(c, r) << '\n';
      return kExitOk;
    }

    if (*report_cmd) {
      RunConfig c = load_run_config(fs::path(report_dir) / "config.json");
      report_ov.apply(c);
      const BenchResult r = read_bench_dir(report_dir, c);
      std::cout << bench_summary(c, r) << '\n';
      std::cout << "iteration,wall_ms\n";
      for (size_t k = 0; k < r.report.wall_ms.size(); ++k)
        std::cout << k << ',' << r.report.wall_ms[k] << '\n';
      return kExitOk;
    }
  } catch (const BenchError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const ProtocolError& e) {
    std::cerr << "protocol error: " << e.what() << '\n';
    return kExitProtocol;
  } catch (const TimeoutError& e) {
    std::cerr << "timeout: " << e.what() << '\n';
    return kExitTimeout;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ProfileError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitProtocol;
  }
  return kExitUsage;
}
