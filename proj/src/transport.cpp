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

#include "p3/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <thread>

namespace p3 {

namespace {

std::string errno_text(const char* what) {
  return std::string(what) + ": " + std::strerror(errno);
}

sockaddr_in resolve(const Endpoint& ep) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(ep.port);
  const std::string host = ep.host == "localhost" ? "127.0.0.1" : ep.host;
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;

  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr)
    throw std::runtime_error("cannot resolve host '" + ep.host + "'");
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

}  // namespace

TokenBucket::TokenBucket(double rate_bits_per_sec, uint64_t burst_bytes)
    : rate_bytes_per_sec_(rate_bits_per_sec > 0 ? rate_bits_per_sec / 8.0 : 0),
      burst_(std::max<uint64_t>(1, burst_bytes)),
      tokens_(static_cast<double>(burst_)),
      last_(Clock::now()) {}

void TokenBucket::acquire(std::size_t bytes) {
  if (!limited() || bytes == 0) return;
  Clock::time_point wake;
  {
    std::lock_guard<std::mutex> lock(mu_);
    const auto now = Clock::now();
    const double elapsed = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    tokens_ = std::min(static_cast<double>(burst_), tokens_ + elapsed * rate_bytes_per_sec_);
    // Take the tokens now, possibly going into debt; the caller then waits
    // until the debt is repaid. Senders queue up in acquisition order.
    tokens_ -= static_cast<double>(bytes);
    if (tokens_ >= 0) return;
    wake = now + std::chrono::duration_cast<Clock::duration>(
                     std::chrono::duration<double>(-tokens_ / rate_bytes_per_sec_));
  }
  std::this_thread::sleep_until(wake);
}

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon + 1 == text.size())
    throw std::invalid_argument("expected host:port, got '" + text + "'");
  Endpoint ep;
  ep.host = text.substr(0, colon);
  if (ep.host.empty()) ep.host = "127.0.0.1";
  const unsigned long port = std::stoul(text.substr(colon + 1));
  if (port > 65535) throw std::invalid_argument("port out of range in '" + text + "'");
  ep.port = static_cast<uint16_t>(port);
  return ep;
}

Socket::~Socket() { close(); }

Socket& Socket::operator=(Socket&& o) noexcept {
  if (this != &o) {
    close();
    fd_ = o.fd_;
    o.fd_ = -1;
  }
  return *this;
}

void Socket::shutdown() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

Listener Listener::bind(const Endpoint& at) {
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) throw std::runtime_error(errno_text("socket"));
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = resolve(at);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    throw std::runtime_error(errno_text(("bind " + at.str()).c_str()));
  if (::listen(s.fd(), 64) != 0) throw std::runtime_error(errno_text("listen"));
  socklen_t len = sizeof(addr);
  ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
  Listener l;
  l.sock_ = std::move(s);
  l.port_ = ntohs(addr.sin_port);
  return l;
}

Socket Listener::accept(std::chrono::milliseconds timeout) {
  pollfd pfd{sock_.fd(), POLLIN, 0};
  const int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
  if (rc == 0) throw TimeoutError("no connection within " + std::to_string(timeout.count()) + " ms");
  if (rc < 0) throw std::runtime_error(errno_text("poll"));
  Socket s(::accept4(sock_.fd(), nullptr, nullptr, SOCK_CLOEXEC));
  if (!s.valid()) throw std::runtime_error(errno_text("accept"));
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return s;
}

Socket connect_to(const Endpoint& to, std::chrono::milliseconds timeout) {
  const sockaddr_in addr = resolve(to);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!s.valid()) throw std::runtime_error(errno_text("socket"));
    if (::connect(s.fd(), reinterpret_cast<const sockaddr*>(&addr), sizeof(addr)) == 0) {
      int one = 1;
      ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return s;
    }
    if (std::chrono::steady_clock::now() >= deadline)
      throw TimeoutError(errno_text(("connect " + to.str()).c_str()));
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

Connection::Connection(Socket sock, TokenBucket* egress, ByteCounters* counters)
    : sock_(std::move(sock)), egress_(egress), counters_(counters), recv_buf_(64 * 1024) {}

void Connection::send(const Frame& frame) {
  std::lock_guard<std::mutex> lock(send_mu_);
  send_buf_.clear();
  encode_into(frame, send_buf_);
  const std::size_t chunk =
      egress_ && egress_->limited()
          ? static_cast<std::size_t>(std::min<uint64_t>(kChunk, egress_->burst_bytes()))
          : send_buf_.size();
  std::size_t pos = 0;
  while (pos < send_buf_.size()) {
    const std::size_t n = std::min(chunk, send_buf_.size() - pos);
    if (egress_) egress_->acquire(n);
    std::size_t done = 0;
    while (done < n) {
      const ssize_t w = ::send(sock_.fd(), send_buf_.data() + pos + done, n - done, MSG_NOSIGNAL);
      if (w < 0) {
        if (errno == EINTR) continue;
        throw ProtocolError(errno_text("send"));
      }
      done += static_cast<std::size_t>(w);
      if (counters_) counters_->record_bytes(Direction::out, static_cast<uint64_t>(w));
    }
    pos += n;
  }
  bytes_sent_ += send_buf_.size();
}

std::optional<Frame> Connection::recv() {
  for (;;) {
    if (auto f = reader_.next()) return f;
    const ssize_t r = ::recv(sock_.fd(), recv_buf_.data(), recv_buf_.size(), 0);
    if (r == 0) {
      if (reader_.buffered() != 0) throw ProtocolError("connection closed mid-frame");
      return std::nullopt;
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(errno_text("recv"));
    }
    if (counters_) counters_->record_bytes(Direction::in, static_cast<uint64_t>(r));
    reader_.feed(std::span<const std::byte>(recv_buf_.data(), static_cast<std::size_t>(r)));
  }
}

}  // namespace p3
