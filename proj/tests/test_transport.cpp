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

#include <sys/socket.h>

#include <thread>

#include "p3/transport.hpp"

namespace p3 {
namespace {

using Clock = std::chrono::steady_clock;
using namespace std::chrono_literals;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

TEST(TokenBucket, UnlimitedIsPassThrough) {
  TokenBucket b;
  const auto t0 = Clock::now();
  for (int i = 0; i < 1000; ++i) b.acquire(1 << 20);
  EXPECT_LT(seconds_since(t0), 0.1);
}

TEST(TokenBucket, LongRunRate) {
  TokenBucket b(8e6, 50 * 1024);  // 1 MB/s
  const auto t0 = Clock::now();
  for (int i = 0; i < 50; ++i) b.acquire(10000);  // 500 kB
  const double t = seconds_since(t0);
  EXPECT_GT(t, 0.40);
  EXPECT_LT(t, 0.55);
}

TEST(TokenBucket, SharedByTwoThreads) {
  TokenBucket b(8e6, 50 * 1024);
  const auto t0 = Clock::now();
  std::thread a([&] {
    for (int i = 0; i < 40; ++i) b.acquire(10000);
  });
  std::thread c([&] {
    for (int i = 0; i < 40; ++i) b.acquire(10000);
  });
  a.join();
  c.join();
  // 800 kB at 1 MB/s combined, less the initial burst.
  const double t = seconds_since(t0);
  EXPECT_GT(t, 0.70);
  EXPECT_LT(t, 0.90);
}

TEST(Endpoint, Parse) {
  const Endpoint e = parse_endpoint("10.0.0.2:9000");
  EXPECT_EQ(e.host, "10.0.0.2");
  EXPECT_EQ(e.port, 9000);
  EXPECT_EQ(e.str(), "10.0.0.2:9000");
  EXPECT_THROW(parse_endpoint("nohost"), std::invalid_argument);
  EXPECT_THROW(parse_endpoint("h:notaport"), std::invalid_argument);
  EXPECT_THROW(parse_endpoint("h:70000"), std::invalid_argument);
}

TEST(Connection, LoopbackFramesAndCounters) {
  Listener l = Listener::bind({"127.0.0.1", 0});
  ASSERT_NE(l.port(), 0);
  ByteCounters cc, sc;
  std::thread client([&] {
    Connection c(connect_to({"127.0.0.1", l.port()}, 2s), nullptr, &cc);
    for (int i = 0; i < 100; ++i) {
      Frame f;
      f.type = MsgType::push;
      f.iteration = i;
      f.values.assign(i * 100, 1.5f);
      c.send(f);
    }
  });
  Connection s(l.accept(2s), nullptr, &sc);
  uint64_t expect_bytes = 0;
  for (int i = 0; i < 100; ++i) {
    auto f = s.recv();
    ASSERT_TRUE(f);
    EXPECT_EQ(f->iteration, uint64_t(i));
    EXPECT_EQ(f->values.size(), size_t(i) * 100);
    expect_bytes += f->wire_size();
  }
  client.join();
  EXPECT_FALSE(s.recv());  // orderly close
  EXPECT_EQ(sc.bytes_in(), expect_bytes);
  EXPECT_EQ(cc.bytes_out(), expect_bytes);
}

TEST(Connection, AcceptTimesOut) {
  Listener l = Listener::bind({"127.0.0.1", 0});
  EXPECT_THROW(l.accept(20ms), TimeoutError);
}

TEST(Connection, ConnectTimesOut) {
  Listener l = Listener::bind({"127.0.0.1", 0});
  const uint16_t port = l.port();
  l.close();
  EXPECT_THROW(connect_to({"127.0.0.1", port}, 100ms), TimeoutError);
}

TEST(Connection, GarbageIsAProtocolError) {
  Listener l = Listener::bind({"127.0.0.1", 0});
  std::thread client([&] {
    Socket s = connect_to({"127.0.0.1", l.port()}, 2s);
    const char junk[64] = "definitely not a frame header, just some bytes......";
    ASSERT_EQ(::send(s.fd(), junk, sizeof junk, 0), ssize_t(sizeof junk));
  });
  Connection s(l.accept(2s), nullptr, nullptr);
  EXPECT_THROW(s.recv(), ProtocolError);
  client.join();
}

}  // namespace
}  // namespace p3
