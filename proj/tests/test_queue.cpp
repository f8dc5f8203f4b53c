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

#include <algorithm>
#include <atomic>
#include <random>
#include <thread>

#include "p3/queue.hpp"
#include "p3/server.hpp"
#include "p3/worker.hpp"

namespace p3 {
namespace {

TEST(Queue, FifoAmongEquals) {
  BlockingPriorityQueue<int, FifoOrder> q;
  for (int i = 0; i < 100; ++i) q.push(i);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(*q.try_pop(), i);
  EXPECT_FALSE(q.try_pop());
}

TEST(Queue, CloseDrainsThenStops) {
  BlockingPriorityQueue<int, std::less<int>> q;
  q.push(3);
  q.push(1);
  q.close();
  EXPECT_EQ(*q.pop(), 1);
  EXPECT_EQ(*q.pop(), 3);
  EXPECT_FALSE(q.pop());
}

TEST(Queue, PopUntilTimesOut) {
  BlockingPriorityQueue<int, std::less<int>> q;
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_FALSE(q.pop_until(t0 + std::chrono::milliseconds(20)));
  EXPECT_GE(std::chrono::steady_clock::now() - t0, std::chrono::milliseconds(20));
}

Frame push_frame(uint32_t layer, uint32_t slice, uint16_t rank) {
  Frame f;
  f.type = MsgType::push;
  f.priority = layer;
  f.layer_index = layer;
  f.slice_index = slice;
  f.worker_rank = rank;
  return f;
}

// Several producers enqueue concurrently while one consumer drains. Each
// pop must return the minimum (by compare_priority, then arrival) of what is
// queued at that moment; checked against a shadow model kept under the same
// lock as the pop.
TEST(ServerInbox, PriorityLinearizationUnderRandomInterleavings) {
  for (int trial = 0; trial < 20; ++trial) {
    ServerInbox inbox(FrameOrder{SyncMode::p3});
    std::atomic<int> producers_done{0};
    constexpr int kProducers = 4, kPerProducer = 300;
    std::vector<std::thread> producers;
    for (int p = 0; p < kProducers; ++p) {
      producers.emplace_back([&, p] {
        std::mt19937 rng(trial * 31 + p);
        for (int i = 0; i < kPerProducer; ++i) {
          inbox.push(push_frame(rng() % 20, rng() % 4, static_cast<uint16_t>(p)));
          if (rng() % 8 == 0) std::this_thread::yield();
        }
        producers_done++;
      });
    }
    int popped = 0, violations = 0;
    while (popped < kProducers * kPerProducer) {
      auto f = inbox.pop_inspect([&](const Frame& got, const Frame* next, size_t) {
        if (next && compare_priority(Priority{next->priority}, next->key(),
                                     Priority{got.priority}, got.key()) < 0)
          ++violations;
      });
      ASSERT_TRUE(f);
      ++popped;
    }
    for (auto& t : producers) t.join();
    EXPECT_EQ(violations, 0);
  }
}

TEST(ServerInbox, SequentialReplayMatchesSortedOrder) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    ServerInbox inbox(FrameOrder{SyncMode::p3});
    std::vector<Frame> frames;
    for (int i = 0; i < 50; ++i) frames.push_back(push_frame(rng() % 10, rng() % 3, i));
    for (const auto& f : frames) inbox.push(f);
    std::stable_sort(frames.begin(), frames.end(), [](const Frame& a, const Frame& b) {
      return compare_priority(Priority{a.priority}, a.key(), Priority{b.priority}, b.key()) < 0;
    });
    for (const auto& f : frames) EXPECT_EQ(inbox.try_pop()->worker_rank, f.worker_rank);
  }
}

TEST(ServerInbox, BaselineIsArrivalOrder) {
  ServerInbox inbox(FrameOrder{SyncMode::baseline});
  for (uint32_t l : {5u, 1u, 3u}) inbox.push(push_frame(l, 0, 0));
  EXPECT_EQ(inbox.try_pop()->layer_index, 5u);
  EXPECT_EQ(inbox.try_pop()->layer_index, 1u);
  EXPECT_EQ(inbox.try_pop()->layer_index, 3u);
}

// A consumer must never see part of one push_all batch.
TEST(Outbox, PushAllIsAtomic) {
  ModelProfile p;
  p.name = "x";
  p.layers = {{0, "a", 10 * 50000, 1, 1}};
  const SlicePlan plan = make_p3_plan(p, 1);
  Outbox q(SendOrder{SyncMode::p3});
  std::vector<Outbox*> qs{&q};
  std::atomic<bool> stop{false};
  int partial = 0;
  std::thread consumer([&] {
    while (!stop) {
      auto snap = q.snapshot();
      std::map<uint64_t, int> per_iteration;
      for (const auto& item : snap) per_iteration[item.iteration]++;
      // Only whole batches of 10 can be visible while nothing is popped.
      for (auto& [it, n] : per_iteration)
        if (n != 10) ++partial;
    }
  });
  for (uint64_t it = 0; it < 500; ++it) enqueue_layer(plan, 0, it, qs);
  stop = true;
  consumer.join();
  EXPECT_EQ(partial, 0);
  EXPECT_EQ(q.size(), 5000u);
}

TEST(Outbox, PreemptionByHigherPriorityLayer) {
  ModelProfile p;
  p.name = "x";
  p.layers = {{0, "a", 10, 1, 1}, {1, "b", 10, 1, 1}, {2, "c", 100000, 1, 1}};
  const SlicePlan plan = make_p3_plan(p, 1);
  Outbox q(SendOrder{SyncMode::p3});
  std::vector<Outbox*> qs{&q};
  enqueue_layer(plan, 2, 0, qs);
  EXPECT_EQ(q.try_pop()->slice.key, (SliceKey{2, 0}));  // alone in the queue
  enqueue_layer(plan, 1, 0, qs);
  enqueue_layer(plan, 0, 0, qs);
  EXPECT_EQ(q.try_pop()->slice.key, (SliceKey{0, 0}));
  EXPECT_EQ(q.try_pop()->slice.key, (SliceKey{1, 0}));
  EXPECT_EQ(q.try_pop()->slice.key, (SliceKey{2, 1}));
}

TEST(Outbox, BaselineKeepsGenerationOrderPerServer) {
  ModelProfile p;
  p.name = "x";
  p.layers = {{0, "a", 10, 1, 1}, {1, "b", 10, 1, 1}, {2, "c", 2000000, 1, 1}};
  const SlicePlan plan = make_baseline_plan(p, 2);
  Outbox q0(SendOrder{SyncMode::baseline}), q1(SendOrder{SyncMode::baseline});
  std::vector<Outbox*> qs{&q0, &q1};
  for (uint32_t l : {2u, 1u, 0u}) enqueue_layer(plan, l, 0, qs);
  for (Outbox* q : qs) {
    uint32_t last = 3;
    while (auto item = q->try_pop()) {
      EXPECT_LT(item->slice.key.layer_index, last);
      last = item->slice.key.layer_index;
      EXPECT_EQ(item->slice.server, q == &q0 ? 0u : 1u);
    }
  }
}

}  // namespace
}  // namespace p3
