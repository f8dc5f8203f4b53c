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


#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>

#include "p3/bench.hpp"
#include "p3/digest.hpp"
#include "p3/run_config.hpp"

#ifndef P3_CLI_PATH
#error "P3_CLI_PATH must name the p3 executable"
#endif

namespace p3 {
namespace {

namespace fs = std::filesystem;
const fs::path kRoot = P3_SOURCE_DIR;

struct CliRun {
  int status = -1;
  std::string out;
};

CliRun run(const std::string& args) {
  const std::string cmd = std::string(P3_CLI_PATH) + " " + args + " 2>/dev/null";
  CliRun r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf;
  size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int st = ::pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

size_t count_lines(const std::string& s) { return std::count(s.begin(), s.end(), '\n'); }

// Live processes whose command line mentions `needle`.
int processes_mentioning(const std::string& needle) {
  int n = 0;
  for (const auto& e : fs::directory_iterator("/proc")) {
    const std::string name = e.path().filename();
    if (name.find_first_not_of("0123456789") != std::string::npos) continue;
    std::ifstream in(e.path() / "cmdline");
    std::string cmd((std::istreambuf_iterator<char>(in)), {});
    std::replace(cmd.begin(), cmd.end(), '\0', ' ');
    if (cmd.find(needle) != std::string::npos) {
      // Zombies have an empty cmdline, so anything here is running.
      ++n;
    }
  }
  return n;
}

TEST(Cli, PlanToy3) {
  const CliRun r = run("plan --profile toy3");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(count_lines(r.out), 4u);  // header + 3 rows
}

TEST(Cli, PlanMatchesLibrary) {
  RunConfig c;
  c.profile = (kRoot / "profiles/vgg19-like.json").string();
  c.num_servers = 4;
  const CliRun r = run("plan --profile " + c.profile + " --num-servers 4");
  ASSERT_EQ(r.status, 0);
  EXPECT_EQ(r.out, plan_to_csv(make_plan(c, resolve_profile(c))));
}

TEST(Cli, Errors) {
  EXPECT_EQ(run("plan --profile /nonexistent/profile.json").status, kExitUsage);
  EXPECT_EQ(run("plan --mode sideways").status, kExitUsage);
  EXPECT_EQ(run("").status, kExitUsage);
  EXPECT_EQ(run("simulate /nonexistent.json").status, kExitUsage);
  EXPECT_EQ(run("--help").status, 0);
}

TEST(Cli, SimulateCanonical) {
  const std::string fig4 = (kRoot / "scenarios/fig4.json").string();
  const std::string fig6 = (kRoot / "scenarios/fig6.json").string();
  EXPECT_NE(run("simulate " + fig4 + " --policy aggressive-coarse").out.find("delay=4 "),
            std::string::npos);
  EXPECT_NE(run("simulate " + fig4 + " --policy priority-sliced").out.find("delay=2 "),
            std::string::npos);
  EXPECT_NE(run("simulate " + fig6 + " --policy aggressive-coarse --summary-only")
                .out.find("makespan=10 "),
            std::string::npos);
  const CliRun sliced = run("simulate " + fig6 + " --policy aggressive-sliced");
  EXPECT_NE(sliced.out.find("makespan=7 "), std::string::npos);
  EXPECT_EQ(sliced.out.substr(0, 23), "resource,item,start,end");
  const CliRun sweep = run("simulate " + (kRoot / "scenarios/sweep_huge_layer.json").string() +
                        " --sweep 1,8,64");
  EXPECT_EQ(sweep.out, "slice_ticks,makespan\n1,139\n8,97\n64,202\n");
}

TEST(Cli, BenchToy3BothModesAgree) {
  const fs::path out = fs::temp_directory_path() / "p3_cli_bench";
  fs::remove_all(out);
  std::vector<uint64_t> digests;
  for (const char* mode : {"p3", "baseline"}) {
    const fs::path dir = out / mode;
    const CliRun r = run(std::string("bench --profile toy3 --workers 2 --iterations 10 --mode ") +
                      mode + " --out " + dir.string());
    ASSERT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("mode=" + std::string(mode)), std::string::npos);
    for (int w = 0; w < 2; ++w)
      digests.push_back(read_digest_file(dir / ("worker" + std::to_string(w)) / "digest.txt"));
    EXPECT_TRUE(fs::exists(dir / "throughput.csv"));
    EXPECT_TRUE(fs::exists(dir / "net_util.csv"));
    const CliRun rep = run("report " + dir.string());
    EXPECT_EQ(rep.status, 0);
    EXPECT_NE(rep.out.find("server_digest=" + digest_hex(digests.back())), std::string::npos);
  }
  for (uint64_t d : digests) EXPECT_EQ(d, digests.front());
  EXPECT_EQ(processes_mentioning(out.string()), 0);
}

TEST(Cli, ConfigFileWithFlagOverride) {
  const fs::path dir = fs::temp_directory_path() / "p3_cli_cfg";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunConfig c;
  c.profile = "toy3";
  c.num_servers = 2;
  c.mode = SyncMode::baseline;
  {
    std::ofstream f(dir / "cfg.json");
    f << run_config_to_json(c).dump();
  }
  const CliRun r = run("plan --config " + (dir / "cfg.json").string() + " --mode p3");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(count_lines(r.out), 4u);
  EXPECT_NE(r.out.find("1,0,0,10,1,1"), std::string::npos);  // round-robin server 1
  fs::remove_all(dir);
}

TEST(Bench, TimeoutKillsEveryChild) {
  RunConfig c;
  c.profile = "toy3";
  c.num_workers = 2;
  c.iterations = 1000000;
  c.output_dir = (fs::temp_directory_path() / "p3_bench_timeout").string();
  fs::remove_all(c.output_dir);
  try {
    run_bench(c, P3_CLI_PATH, std::chrono::seconds(1));
    ADD_FAILURE() << "expected a timeout";
  } catch (const BenchError& e) {
    EXPECT_EQ(e.exit_code(), kExitTimeout);
  }
  EXPECT_EQ(processes_mentioning(c.output_dir), 0);
}

TEST(Bench, MissingProfileFailsBeforeSpawning) {
  RunConfig c;
  c.num_workers = 2;
  c.output_dir = (fs::temp_directory_path() / "p3_bench_fail").string();
  c.profile = (fs::path(c.output_dir) / "missing.json").string();
  EXPECT_THROW(run_bench(c, P3_CLI_PATH, std::chrono::seconds(30)), ProfileError);
  EXPECT_EQ(processes_mentioning(c.output_dir), 0);
}

}  // namespace
}  // namespace p3
