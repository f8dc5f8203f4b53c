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


#include "p3/worker_node.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <thread>

#include "p3/errors.hpp"
#include "p3/server.hpp"

namespace p3 {
namespace {

using Clock = std::chrono::steady_clock;

void emulate(double us) {
  if (us > 0) std::this_thread::sleep_for(std::chrono::duration<double, std::micro>(us));
}

}  // namespace

struct WorkerNode::Impl {
  explicit Impl(WorkerConfig c)
      : config(std::move(c)),
        store(config.plan),
        gen(worker_seed(config.profile.seed, config.rank)),
        egress(config.throttle_bits_per_sec, config.burst_bytes),
        inbox(FrameOrder{config.plan.mode()}) {}

  ~Impl() {
    for (auto& c : conns)
      if (c) c->shutdown();
    for (auto* ts : {&receivers, &senders})
      for (auto& t : *ts)
        if (t.joinable()) t.join();
    if (applier.joinable()) applier.join();
  }

  uint64_t now_us() const {
    return static_cast<uint64_t>(
        std::chrono::duration_cast<std::chrono::microseconds>(Clock::now() - start)
            .count());
  }

  void fail(std::exception_ptr e) {
    {
      std::lock_guard<std::mutex> lock(err_mu);
      if (!error) error = e;
    }
    store.abort();
    inbox.close();
    for (auto& q : outboxes) q->close();
    for (auto& c : conns) c->shutdown();
  }

  bool failed() {
    std::lock_guard<std::mutex> lock(err_mu);
    return error != nullptr;
  }

  void connect() {
    const auto& servers = config.servers;
    if (servers.size() != config.plan.num_servers())
      throw std::invalid_argument("plan expects " +
                                  std::to_string(config.plan.num_servers()) +
                                  " servers, got " + std::to_string(servers.size()));
    for (const Endpoint& ep : servers) {
      auto conn = std::make_unique<Connection>(connect_to(ep, config.connect_timeout),
                                               &egress, &counters);
      Frame hello;
      hello.type = MsgType::hello;
      hello.worker_rank = config.rank;
      conn->send(hello);
      conns.push_back(std::move(conn));
    }
    const SyncMode mode = config.plan.mode();
    const size_t queues = mode == SyncMode::p3 ? 1 : servers.size();
    for (size_t i = 0; i < queues; ++i) {
      outboxes.push_back(std::make_unique<Outbox>(SendOrder{mode}));
      outbox_ptrs.push_back(outboxes.back().get());
    }
  }

  void receive(uint32_t server) {
    Connection& conn = *conns[server];
    for (;;) {
      auto f = conn.recv();
      if (!f) {
        if (finished.load()) return;
        throw ProtocolError("server " + std::to_string(server) +
                            " closed the connection mid-run");
      }
      switch (f->type) {
        case MsgType::bcast:
          inbox.push(std::move(*f));
          break;
        case MsgType::notify: {
          if (config.plan.mode() != SyncMode::baseline)
            throw ProtocolError("NOTIFY received in p3 mode");
          const Slice* s = config.plan.find(f->key());
          if (s == nullptr || s->server != server)
            throw ProtocolError("NOTIFY for a slice server " + std::to_string(server) +
                                " does not own");
          outboxes[server]->push({*s, f->iteration, MsgType::pull});
          break;
        }
        default:
          throw ProtocolError("unexpected " + std::string(to_string(f->type)) +
                              " from server " + std::to_string(server));
      }
    }
  }

  void apply() {
    while (auto f = inbox.pop()) store.apply(*f);
  }

  void send(Outbox& q) {
    for (;;) {
      SendRecord rec;
      auto item = q.pop_inspect([&](const SendItem& popped, const SendItem* next,
                                           size_t remaining) {
        rec.key = popped.slice.key;
        rec.iteration = popped.iteration;
        rec.queued = static_cast<uint32_t>(remaining);
        rec.ordered = next == nullptr || config.plan.mode() == SyncMode::baseline ||
                      compare_priority(popped.slice, next->slice) <= 0;
      });
      if (!item) return;
      rec.t_us = now_us();
      if (item->type == MsgType::push) {
        conns[item->slice.server]->send(
            make_push(gen, config.rank, item->slice, item->iteration));
        std::lock_guard<std::mutex> lock(sends_mu);
        sends.push_back(rec);
      } else {
        conns[item->slice.server]->send(make_pull(config.rank, item->slice, item->iteration));
      }
    }
  }

  template <typename Fn>
  std::thread guarded(Fn fn) {
    return std::thread([this, fn] {
      try {
        fn();
      } catch (...) {
        fail(std::current_exception());
      }
    });
  }

  void check_wait(WaitResult r, uint64_t version) {
    if (r == WaitResult::timeout)
      throw TimeoutError("worker " + std::to_string(config.rank) +
                         " timed out waiting for version " + std::to_string(version) +
                         ": " + store.pending_report(version));
    if (r == WaitResult::aborted) throw ProtocolError("aborted");
  }

  void compute(std::vector<IterationMetrics>& phases) {
    const auto& layers = config.profile.layers;
    const uint32_t n = static_cast<uint32_t>(layers.size());
    const double scale = config.compute_scale;
    for (uint64_t k = 0; k < config.iterations; ++k) {
      IterationMetrics m;
      m.fwd_start_us = now_us();
      for (uint32_t l = 0; l < n; ++l) {
        check_wait(store.wait_version(l, k, Clock::now() + config.barrier_timeout), k);
        emulate(layers[l].fwd_time * scale);
      }
      m.fwd_end_us = now_us();
      m.bwd_start_us = m.fwd_end_us;
      for (uint32_t l = n; l-- > 0;) {
        emulate(layers[l].bwd_time * scale);
        enqueue_layer(config.plan, l, k, outbox_ptrs);
      }
      m.bwd_end_us = now_us();
      phases.push_back(m);
    }
    check_wait(store.wait_all(config.iterations, Clock::now() + config.barrier_timeout),
               config.iterations);
    for (uint64_t k = 0; k < phases.size(); ++k) {
      auto t = store.all_reached_at(k + 1);
      phases[k].sync_end_us =
          t ? static_cast<uint64_t>(
                  std::chrono::duration_cast<std::chrono::microseconds>(*t - start).count())
            : now_us();
    }
  }

  WorkerConfig config;
  ParamStore store;
  GradGen gen;
  TokenBucket egress;
  ByteCounters counters;
  std::vector<std::unique_ptr<Connection>> conns;
  std::vector<std::unique_ptr<Outbox>> outboxes;
  std::vector<Outbox*> outbox_ptrs;
  BlockingPriorityQueue<Frame, FrameOrder> inbox;
  std::vector<std::thread> receivers;
  std::vector<std::thread> senders;
  std::thread applier;
  std::atomic<bool> finished{false};
  Clock::time_point start;

  std::mutex sends_mu;
  std::vector<SendRecord> sends;

  std::mutex err_mu;
  std::exception_ptr error;
};

WorkerNode::WorkerNode(WorkerConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

WorkerNode::~WorkerNode() = default;

WorkerResult WorkerNode::run() {
  Impl& w = *impl_;
  w.connect();
  w.start = Clock::now();
  Sampler sampler(w.counters, w.config.sample_period);
  sampler.start();

  for (uint32_t s = 0; s < w.conns.size(); ++s)
    w.receivers.push_back(w.guarded([&w, s] { w.receive(s); }));
  w.applier = w.guarded([&w] { w.apply(); });
  for (auto& q : w.outboxes) {
    Outbox* box = q.get();
    w.senders.push_back(w.guarded([&w, box] { w.send(*box); }));
  }

  WorkerResult result;
  try {
    w.compute(result.phases);
  } catch (...) {
    w.fail(std::current_exception());
  }

  for (auto& q : w.outboxes) q->close();
  for (auto& t : w.senders) t.join();
  if (!w.failed()) {
    try {
      w.finished = true;
      Frame fin;
      fin.type = MsgType::fin;
      fin.worker_rank = w.config.rank;
      for (auto& c : w.conns) c->send(fin);
    } catch (...) {
      w.fail(std::current_exception());
    }
  }
  for (auto& t : w.receivers) t.join();
  w.inbox.close();
  w.applier.join();
  sampler.stop();
  if (w.error) std::rethrow_exception(w.error);

  result.wall_ms = iteration_wall_ms(result.phases);
  result.samples = sampler.samples();
  result.sends = std::move(w.sends);
  result.digest = w.store.digest();
  result.bytes_out = w.counters.bytes_out();
  result.bytes_in = w.counters.bytes_in();

  if (const auto& dir = w.config.output_dir; !dir.empty()) {
    std::filesystem::create_directories(dir);
    write_throughput_csv(dir / "throughput.csv", result.wall_ms);
    write_net_util_csv(dir / "net_util.csv", result.samples);
    write_phases_csv(dir / "phases.csv", result.phases);
    write_digest_file(dir / "digest.txt", result.digest);
  }
  return result;
}

void write_phases_csv(const std::filesystem::path& path,
                      std::span<const IterationMetrics> phases) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iteration,fwd_start_us,fwd_end_us,bwd_start_us,bwd_end_us,sync_end_us\n";
  for (size_t k = 0; k < phases.size(); ++k) {
    const auto& m = phases[k];
    out << k << ',' << m.fwd_start_us << ',' << m.fwd_end_us << ',' << m.bwd_start_us
        << ',' << m.bwd_end_us << ',' << m.sync_end_us << '\n';
  }
}

}  // namespace p3
