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

#include "p3/server_node.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <thread>

#include "p3/digest.hpp"

namespace p3 {

struct ServerNode::Peer {
  explicit Peer(FrameOrder order) : sendq(order) {}

  std::unique_ptr<Connection> conn;
  BlockingPriorityQueue<Frame, FrameOrder> sendq;
  std::thread reader;
  std::thread sender;
};

ServerNode::ServerNode(ServerConfig config)
    : config_(std::move(config)),
      engine_(config_.plan, config_.rank, config_.num_workers, config_.lr),
      listener_(Listener::bind(config_.listen)),
      egress_(config_.throttle_bits_per_sec, config_.burst_bytes),
      inbox_(FrameOrder{config_.plan.mode()}) {}

ServerNode::~ServerNode() {
  for (auto& p : peers_) {
    if (!p) continue;
    if (p->conn) p->conn->shutdown();
    if (p->reader.joinable()) p->reader.join();
    if (p->sender.joinable()) p->sender.join();
  }
}

void ServerNode::fail(std::exception_ptr error) {
  {
    std::lock_guard<std::mutex> lock(err_mu_);
    if (!error_) error_ = error;
  }
  inbox_.close();
  for (auto& p : peers_) {
    if (!p) continue;
    p->sendq.close();
    if (p->conn) p->conn->shutdown();
  }
}

void ServerNode::run() {
  const uint16_t n = config_.num_workers;
  peers_.resize(n);

  // Registration: every connection opens with HELLO carrying its rank.
  for (uint16_t i = 0; i < n; ++i) {
    Socket sock = listener_.accept(config_.accept_timeout);
    auto conn = std::make_unique<Connection>(std::move(sock), &egress_, &counters_);
    auto hello = conn->recv();
    if (!hello || hello->type != MsgType::hello)
      throw ProtocolError("connection did not open with HELLO");
    engine_.register_worker(hello->worker_rank);
    auto peer = std::make_unique<Peer>(FrameOrder{engine_.mode()});
    peer->conn = std::move(conn);
    peers_[hello->worker_rank] = std::move(peer);
  }
  listener_.close();

  Sampler sampler(counters_, config_.sample_period);
  sampler.start();

  std::atomic<uint16_t> fins{0};
  for (auto& peer : peers_) {
    Peer* p = peer.get();
    p->sender = std::thread([this, p] {
      try {
        while (auto f = p->sendq.pop()) p->conn->send(*f);
      } catch (...) {
        fail(std::current_exception());
      }
    });
    p->reader = std::thread([this, p, n, &fins] {
      try {
        for (;;) {
          auto f = p->conn->recv();
          if (!f) throw ProtocolError("worker connection closed before FIN");
          if (f->type == MsgType::fin) {
            if (fins.fetch_add(1) + 1 == n) inbox_.close();
            return;
          }
          if (f->type != MsgType::push && f->type != MsgType::pull)
            throw ProtocolError("unexpected " + std::string(to_string(f->type)) +
                                " from a worker");
          inbox_.push(std::move(*f));
        }
      } catch (...) {
        fail(std::current_exception());
      }
    });
  }

  std::thread consumer([this] {
    try {
      while (auto f = inbox_.pop()) {
        for (Outgoing& o : engine_.handle(std::move(*f)))
          peers_[o.worker_rank]->sendq.push(std::move(o.frame));
      }
    } catch (...) {
      fail(std::current_exception());
    }
    for (auto& p : peers_) p->sendq.close();
  });

  consumer.join();
  for (auto& p : peers_) p->sender.join();
  for (auto& p : peers_) p->reader.join();
  for (auto& p : peers_) p->conn->shutdown();
  sampler.stop();

  if (error_) std::rethrow_exception(error_);
  write_outputs(sampler);
}

void ServerNode::write_outputs(const Sampler& sampler) const {
  if (config_.output_dir.empty()) return;
  std::filesystem::create_directories(config_.output_dir);
  write_digest_file(config_.output_dir / "digest.txt", engine_.digest());
  engine_.write_shards(config_.output_dir / "shards.bin");
  write_net_util_csv(config_.output_dir / "net_util.csv", sampler.samples());
}

}  // namespace p3
