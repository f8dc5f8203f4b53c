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
#include <cstddef>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "p3/metrics.hpp"
#include "p3/proto.hpp"

namespace p3 {

inline constexpr uint64_t kDefaultBurstBytes = 50 * 1024;

/// Token-bucket egress shaper standing in for `tc qdisc ... tbf`. One
/// instance is shared by every connection of a process. A rate <= 0 disables
/// shaping.
class TokenBucket {
 public:
  TokenBucket() = default;
  TokenBucket(double rate_bits_per_sec, uint64_t burst_bytes);

  TokenBucket(const TokenBucket&) = delete;
  TokenBucket& operator=(const TokenBucket&) = delete;

  bool limited() const { return rate_bytes_per_sec_ > 0; }
  double rate_bytes_per_sec() const { return rate_bytes_per_sec_; }
  uint64_t burst_bytes() const { return burst_; }

  /// Blocks until `bytes` may be sent. Callers pass at most burst_bytes() per
  /// call so concurrent senders interleave.
  void acquire(std::size_t bytes);

 private:
  using Clock = std::chrono::steady_clock;

  double rate_bytes_per_sec_ = 0;
  uint64_t burst_ = kDefaultBurstBytes;
  std::mutex mu_;
  double tokens_ = 0;
  Clock::time_point last_{};
};

struct Endpoint {
  std::string host = "127.0.0.1";
  uint16_t port = 0;

  std::string str() const { return host + ":" + std::to_string(port); }
};

/// Parses "host:port".
Endpoint parse_endpoint(const std::string& text);

/// Owning socket file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  ~Socket();
  Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
  Socket& operator=(Socket&& o) noexcept;
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  /// Unblocks any thread reading or writing this socket.
  void shutdown();
  void close();

 private:
  int fd_ = -1;
};

class Listener {
 public:
  /// Binds and listens; port 0 picks an ephemeral port.
  static Listener bind(const Endpoint& at);

  uint16_t port() const { return port_; }
  /// Waits up to `timeout` for a connection; throws TimeoutError.
  Socket accept(std::chrono::milliseconds timeout);
  void close() { sock_.close(); }

 private:
  Socket sock_;
  uint16_t port_ = 0;
};

/// Connects, retrying until `timeout` (servers may still be starting).
Socket connect_to(const Endpoint& to, std::chrono::milliseconds timeout);

/// Framed, shaped, counted TCP connection. send() may be called from several
/// threads; recv() from one reader thread.
class Connection {
 public:
  Connection(Socket sock, TokenBucket* egress, ByteCounters* counters);

  void send(const Frame& frame);
  /// Next frame, or nullopt on orderly EOF. Throws ProtocolError on a
  /// malformed stream or a connection reset.
  std::optional<Frame> recv();

  void shutdown() { sock_.shutdown(); }
  /// Bytes handed to the socket by send(), framing included.
  uint64_t bytes_sent() const { return bytes_sent_; }

 private:
  static constexpr std::size_t kChunk = 16 * 1024;

  Socket sock_;
  TokenBucket* egress_;
  ByteCounters* counters_;
  std::mutex send_mu_;
  std::vector<std::byte> send_buf_;
  uint64_t bytes_sent_ = 0;
  FrameReader reader_;
  std::vector<std::byte> recv_buf_;
};

}  // namespace p3
