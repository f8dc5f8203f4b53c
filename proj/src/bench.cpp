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


#include "p3/bench.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "p3/digest.hpp"
#include "p3/errors.hpp"

namespace p3 {
namespace fs = std::filesystem;
namespace {

using Clock = std::chrono::steady_clock;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Child {
  std::string name;
  pid_t pid = -1;
  int status = 0;
  bool reaped = false;
};

// Owns the children: whatever happens, they are killed and reaped.
class ChildSet {
 public:
  ~ChildSet() { kill_all(); }

  void spawn(const std::string& name, const fs::path& exe,
             const std::vector<std::string>& args, const fs::path& log) {
    std::vector<std::string> argv_s{exe.string()};
    argv_s.insert(argv_s.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_s) argv.push_back(a.data());
    argv.push_back(nullptr);

    const pid_t parent = ::getpid();
    const pid_t pid = ::fork();
    if (pid < 0) throw BenchError(kExitProtocol, "fork failed");
    if (pid == 0) {
      ::prctl(PR_SET_PDEATHSIG, SIGKILL);
      if (::getppid() != parent) ::_exit(127);
      const int fd = ::open(log.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
      if (fd >= 0) {
        ::dup2(fd, 1);
        ::dup2(fd, 2);
        ::close(fd);
      }
      ::execv(argv[0], argv.data());
      ::_exit(127);
    }
    children_.push_back({name, pid});
  }

  /// Reaps finished children; returns the first that failed, if any.
  const Child* poll() {
    for (Child& c : children_) {
      if (c.reaped) continue;
      if (::waitpid(c.pid, &c.status, WNOHANG) == c.pid) {
        c.reaped = true;
        if (!WIFEXITED(c.status) || WEXITSTATUS(c.status) != 0) return &c;
      }
    }
    return nullptr;
  }

  bool all_reaped() const {
    for (const Child& c : children_)
      if (!c.reaped) return false;
    return true;
  }

  void kill_all() {
    for (Child& c : children_)
      if (!c.reaped) ::kill(c.pid, SIGKILL);
    for (Child& c : children_) {
      if (c.reaped) continue;
      ::waitpid(c.pid, &c.status, 0);
      c.reaped = true;
    }
  }

 private:
  std::vector<Child> children_;
};

[[noreturn]] void child_failed(ChildSet& set, const Child& c, const fs::path& dir) {
  set.kill_all();
  int code = kExitProtocol;
  std::string how;
  if (WIFEXITED(c.status)) {
    const int s = WEXITSTATUS(c.status);
    if (s == kExitUsage || s == kExitTimeout) code = s;
    how = "exited with status " + std::to_string(s);
  } else {
    how = "killed by signal " + std::to_string(WTERMSIG(c.status));
  }
  throw BenchError(code, c.name + " " + how + " (log in " + (dir / c.name).string() +
                             "/log.txt)");
}

uint16_t read_port_file(const fs::path& path) {
  std::ifstream in(path);
  unsigned port = 0;
  in >> port;
  return static_cast<uint16_t>(port);
}

}  // namespace

BenchResult run_bench(const RunConfig& config, const fs::path& exe,
                      std::chrono::seconds timeout) {
  const fs::path dir = config.output_dir;
  fs::create_directories(dir);
  const ModelProfile profile = resolve_profile(config);
  const SlicePlan plan = make_plan(config, profile);
  save_profile(profile, dir / "profile.json");
  {
    std::ofstream out(dir / "plan.csv");
    out << plan_to_csv(plan);
  }
  {
    std::ofstream out(dir / "config.json");
    out << run_config_to_json(config).dump(2) << '\n';
  }

  const std::string mode(to_string(config.mode));
  const std::string timeout_ms = std::to_string(config.timeout_ms);
  const auto start = Clock::now();
  const auto deadline = start + timeout;
  ChildSet children;

  const uint32_t num_servers = config.servers();
  std::vector<fs::path> port_files;
  for (uint32_t s = 0; s < num_servers; ++s) {
    const std::string name = "server" + std::to_string(s);
    const fs::path sdir = dir / name;
    fs::create_directories(sdir);
    fs::remove(sdir / "port");
    port_files.push_back(sdir / "port");
    children.spawn(name, exe,
                   {"server", "--listen", "127.0.0.1:0", "--port-file",
                    (sdir / "port").string(), "--rank", std::to_string(s), "--mode", mode,
                    "--plan", (dir / "plan.csv").string(), "--num-servers",
                    std::to_string(num_servers), "--num-workers",
                    std::to_string(config.num_workers), "--lr", num(config.lr),
                    "--throttle", num(config.throttle_bits_per_sec), "--burst",
                    std::to_string(config.burst_bytes), "--timeout", timeout_ms, "--out",
                    sdir.string()},
                   sdir / "log.txt");
  }

  std::string servers;
  for (const fs::path& pf : port_files) {
    while (!fs::exists(pf)) {
      if (const Child* c = children.poll()) child_failed(children, *c, dir);
      if (Clock::now() > deadline) throw BenchError(kExitTimeout, "servers did not start");
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    if (!servers.empty()) servers += ',';
    servers += "127.0.0.1:" + std::to_string(read_port_file(pf));
  }

  for (uint16_t w = 0; w < config.num_workers; ++w) {
    const std::string name = "worker" + std::to_string(w);
    const fs::path wdir = dir / name;
    fs::create_directories(wdir);
    children.spawn(name, exe,
                   {"worker", "--rank", std::to_string(w), "--servers", servers, "--mode",
                    mode, "--profile", (dir / "profile.json").string(), "--plan",
                    (dir / "plan.csv").string(), "--iterations",
                    std::to_string(config.iterations), "--batch-size",
                    std::to_string(config.batch_size), "--throttle",
                    num(config.throttle_bits_per_sec), "--burst",
                    std::to_string(config.burst_bytes), "--compute-scale",
                    num(config.compute_scale), "--timeout", timeout_ms, "--out",
                    wdir.string()},
                   wdir / "log.txt");
  }

  while (!children.all_reaped()) {
    if (const Child* c = children.poll()) child_failed(children, *c, dir);
    if (Clock::now() > deadline) {
      children.kill_all();
      throw BenchError(kExitTimeout, "bench did not finish within " +
                                         std::to_string(timeout.count()) + " s");
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  }

  BenchResult result = read_bench_dir(dir, config);
  result.elapsed_s = std::chrono::duration<double>(Clock::now() - start).count();

  std::vector<double> wall = result.report.wall_ms;
  write_throughput_csv(dir / "throughput.csv", wall);
  std::vector<Sample> merged;
  for (uint16_t w = 0; w < config.num_workers; ++w) {
    const auto samples = read_net_util_csv(dir / ("worker" + std::to_string(w)) / "net_util.csv");
    if (merged.size() < samples.size()) {
      const size_t old = merged.size();
      merged.resize(samples.size());
      for (size_t i = old; i < merged.size(); ++i) {
        merged[i] = old > 0 ? merged[old - 1] : Sample{};
        merged[i].t_ms = samples[i].t_ms;
      }
    }
    for (size_t i = 0; i < merged.size(); ++i) {
      const Sample& s = samples[std::min(i, samples.size() - 1)];
      merged[i].bytes_in += s.bytes_in;
      merged[i].bytes_out += s.bytes_out;
    }
  }
  write_net_util_csv(dir / "net_util.csv", merged);
  {
    std::ofstream out(dir / "summary.txt");
    out << bench_summary(config, result) << '\n';
  }
  return result;
}

BenchResult read_bench_dir(const fs::path& dir, const RunConfig& config) {
  BenchResult r;
  r.dir = dir;
  r.idle_threshold = idle_threshold(config);

  std::vector<double> wall;
  double idle_sum = 0;
  for (uint16_t w = 0; w < config.num_workers; ++w) {
    const fs::path wdir = dir / ("worker" + std::to_string(w));
    const auto ms = read_throughput_csv(wdir / "throughput.csv");
    if (wall.size() < ms.size()) wall.resize(ms.size(), 0.0);
    for (size_t k = 0; k < ms.size(); ++k) wall[k] = std::max(wall[k], ms[k]);
    r.worker_digests.push_back(read_digest_file(wdir / "digest.txt"));
    const auto samples = read_net_util_csv(wdir / "net_util.csv");
    r.worker_idle.push_back(idle_fraction(samples, r.idle_threshold));
    idle_sum += r.worker_idle.back();
  }
  r.idle_fraction = config.num_workers > 0 ? idle_sum / config.num_workers : 0.0;

  try {
    r.report = throughput(wall, config.skip_iterations, std::nullopt, config.batch_size,
                          config.num_workers);
  } catch (const std::invalid_argument&) {
    r.report.wall_ms = wall;
  }

  const ModelProfile profile = load_profile(dir / "profile.json");
  std::vector<std::vector<ShardDump>> shards;
  for (uint32_t s = 0; s < config.servers(); ++s)
    shards.push_back(read_shards(dir / ("server" + std::to_string(s)) / "shards.bin"));
  r.server_digest = params_digest(assemble_from_shards(profile, shards));
  return r;
}

std::string bench_summary(const RunConfig& config, const BenchResult& r) {
  std::ostringstream os;
  char buf[64];
  os << "mode=" << to_string(config.mode);
  std::snprintf(buf, sizeof buf, " samples_per_sec=%.3f", r.report.samples_per_second);
  os << buf;
  std::snprintf(buf, sizeof buf, " idle_fraction=%.4f", r.idle_fraction);
  os << buf;
  os << " workers=" << config.num_workers << " servers=" << config.servers();
  os << " server_digest=" << digest_hex(r.server_digest);
  for (size_t w = 0; w < r.worker_digests.size(); ++w)
    os << " worker" << w << "_digest=" << digest_hex(r.worker_digests[w]);
  return os.str();
}

}  // namespace p3
