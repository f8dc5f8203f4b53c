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


// Helpers shared by the unit tests and the acceptance runner.

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "p3/model.hpp"
#include "p3/plan.hpp"
#include "p3/proto.hpp"
#include "p3/server_node.hpp"
#include "p3/worker_node.hpp"

namespace p3::testing {

inline Frame random_frame(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> type_dist(0, 5);
  Frame f;
  f.type = static_cast<MsgType>(type_dist(rng));
  f.priority = static_cast<uint32_t>(rng());
  f.iteration = rng();
  f.worker_rank = static_cast<uint16_t>(rng());
  f.layer_index = static_cast<uint32_t>(rng());
  f.slice_index = static_cast<uint32_t>(rng());
  f.offset = rng();
  if (carries_payload(f.type)) {
    // Mostly short payloads, sometimes a few thousand elements.
    const size_t n = rng() % 8 == 0 ? rng() % 4096 : rng() % 16;
    f.values.resize(n);
    for (float& v : f.values) {
      // Arbitrary bit patterns, NaNs included: the codec must not care.
      v = std::bit_cast<float>(static_cast<uint32_t>(rng()));
    }
  }
  return f;
}

/// Element-by-element scalar oracle for the synchronous SGD step.
inline std::vector<float> sgd_oracle(const std::vector<std::vector<float>>& grads,
                                     float lr, std::vector<float> params) {
  for (size_t i = 0; i < params.size(); ++i) {
    float sum = 0.0f;
    for (const auto& g : grads) sum = sum + g[i];
    const float mean = sum / static_cast<float>(grads.size());
    const float step = lr * mean;
    params[i] = params[i] - step;
  }
  return params;
}

/// Parameters of every layer after `iterations` synchronous steps, computed
/// directly from the gradient generator without any messaging.
inline ModelParams expected_params(const ModelProfile& profile, uint16_t num_workers,
                                   uint32_t iterations, float lr) {
  ModelParams params(profile.layers.size());
  for (const LayerSpec& layer : profile.layers) {
    auto& p = params[layer.index];
    p.resize(layer.param_count);
    for (uint64_t e = 0; e < layer.param_count; ++e) p[e] = initial_param(layer.index, e);
  }
  std::vector<GradGen> gens;
  for (uint16_t w = 0; w < num_workers; ++w)
    gens.emplace_back(worker_seed(profile.seed, w));
  for (uint64_t k = 0; k < iterations; ++k) {
    for (const LayerSpec& layer : profile.layers) {
      auto& p = params[layer.index];
      for (uint64_t e = 0; e < layer.param_count; ++e) {
        float sum = 0.0f;
        for (const GradGen& g : gens) sum = sum + g(k, layer.index, e);
        const float step = lr * (sum / static_cast<float>(num_workers));
        p[e] = p[e] - step;
      }
    }
  }
  return params;
}

struct ClusterResult {
  std::vector<WorkerResult> workers;
  std::vector<uint64_t> server_digests;
  std::vector<std::vector<ShardDump>> shards;
};

/// Servers and workers as threads of this process, talking over loopback.
struct ClusterOptions {
  SyncMode mode = SyncMode::p3;
  uint16_t num_workers = 1;
  uint32_t num_servers = 1;
  uint32_t iterations = 3;
  float lr = kDefaultLearningRate;
  double compute_scale = 0.0;
  uint64_t max_slice = kDefaultMaxSlice;
  double throttle_bits_per_sec = 0;
  std::filesystem::path output_dir;
};

inline ClusterResult run_cluster(const ModelProfile& profile, const ClusterOptions& o) {
  const SlicePlan plan = o.mode == SyncMode::p3
                             ? make_p3_plan(profile, o.num_servers, o.max_slice)
                             : make_baseline_plan(profile, o.num_servers);
  std::vector<std::unique_ptr<ServerNode>> servers;
  std::vector<Endpoint> endpoints;
  for (uint32_t s = 0; s < o.num_servers; ++s) {
    ServerConfig sc;
    sc.rank = s;
    sc.plan = plan;
    sc.num_workers = o.num_workers;
    sc.lr = o.lr;
    sc.throttle_bits_per_sec = o.throttle_bits_per_sec;
    sc.accept_timeout = std::chrono::seconds(20);
    servers.push_back(std::make_unique<ServerNode>(sc));
    endpoints.push_back({"127.0.0.1", servers.back()->port()});
  }
  std::vector<std::exception_ptr> errors(o.num_servers + o.num_workers);
  std::vector<std::thread> threads;
  for (uint32_t s = 0; s < o.num_servers; ++s) {
    threads.emplace_back([&, s] {
      try {
        servers[s]->run();
      } catch (...) {
        errors[s] = std::current_exception();
      }
    });
  }
  ClusterResult result;
  result.workers.resize(o.num_workers);
  for (uint16_t w = 0; w < o.num_workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        WorkerConfig wc;
        wc.rank = w;
        wc.servers = endpoints;
        wc.profile = profile;
        wc.plan = plan;
        wc.iterations = o.iterations;
        wc.compute_scale = o.compute_scale;
        wc.throttle_bits_per_sec = o.throttle_bits_per_sec;
        wc.barrier_timeout = std::chrono::seconds(20);
        if (!o.output_dir.empty()) wc.output_dir = o.output_dir / ("worker" + std::to_string(w));
        WorkerNode node(wc);
        result.workers[w] = node.run();
      } catch (...) {
        errors[o.num_servers + w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (auto& s : servers) {
    result.server_digests.push_back(s->engine().digest());
    std::vector<ShardDump> dump;
    for (const ShardState* st : s->engine().shards())
      dump.push_back({st->slice(), {st->params().begin(), st->params().end()}});
    result.shards.push_back(std::move(dump));
  }
  return result;
}

}  // namespace p3::testing
