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

#include <bit>
#include <numeric>
#include <random>

#include "p3/digest.hpp"
#include "p3/server.hpp"
#include "support.hpp"

namespace p3 {
namespace {

Slice one_slice(uint64_t len) { return Slice{{0, 0}, 0, len, {0}, 0}; }

TEST(ShardState, OneWorkerStep) {
  ShardState s(one_slice(1), {1.0f}, 1, 0.5f);
  EXPECT_EQ(s.on_push(0, 0, {2.0f}), PushStatus::ready);
  s.aggregate_and_update();
  EXPECT_EQ(s.params()[0], 0.0f);
  EXPECT_EQ(s.iteration(), 1u);
}

TEST(ShardState, TwoWorkerMean) {
  ShardState s(one_slice(1), {0.0f}, 2, 1.0f);
  EXPECT_EQ(s.on_push(1, 0, {3.0f}), PushStatus::waiting);
  EXPECT_EQ(s.on_push(0, 0, {1.0f}), PushStatus::ready);
  s.aggregate_and_update();
  EXPECT_EQ(s.params()[0], -2.0f);
}

TEST(ShardState, ReadyOnlyWhenAllPushed) {
  ShardState s(one_slice(2), {0, 0}, 4, 0.1f);
  for (uint16_t r = 0; r < 3; ++r) EXPECT_EQ(s.on_push(r, 0, {1, 1}), PushStatus::waiting);
  EXPECT_THROW(s.aggregate_and_update(), ProtocolError);
  EXPECT_EQ(s.on_push(3, 0, {1, 1}), PushStatus::ready);
}

TEST(ShardState, Errors) {
  ShardState s(one_slice(2), {0, 0}, 2, 0.1f);
  EXPECT_THROW(s.on_push(0, 1, {1, 1}), ProtocolError);  // iteration ahead
  EXPECT_THROW(s.on_push(2, 0, {1, 1}), ProtocolError);  // unknown rank
  EXPECT_THROW(s.on_push(0, 0, {1}), ProtocolError);     // length
  s.on_push(0, 0, {1, 1});
  EXPECT_THROW(s.on_push(0, 0, {1, 1}), ProtocolError);  // duplicate
}

// 10^3 random cases against the scalar oracle, bit for bit.
TEST(ShardState, MatchesScalarOracle) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<float> val(-4.0f, 4.0f);
  for (int c = 0; c < 1000; ++c) {
    const uint16_t workers = 1 + rng() % 6;
    const size_t len = 1 + rng() % (c % 50 == 0 ? 40000 : 64);
    const float lr = std::uniform_real_distribution<float>(0.0f, 1.0f)(rng);
    std::vector<float> params(len);
    for (auto& v : params) v = val(rng);
    std::vector<std::vector<float>> grads(workers, std::vector<float>(len));
    for (auto& g : grads)
      for (auto& v : g) v = val(rng);
    const auto expect = testing::sgd_oracle(grads, lr, params);

    ShardState s(one_slice(len), params, workers, lr);
    // Push order is random; the sum order must still be by rank.
    std::vector<uint16_t> order(workers);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (uint16_t r : order) s.on_push(r, 0, grads[r]);
    auto got = s.aggregate_and_update();
    for (size_t i = 0; i < len; ++i)
      ASSERT_EQ(std::bit_cast<uint32_t>(got[i]), std::bit_cast<uint32_t>(expect[i]))
          << "case " << c << " element " << i;
  }
}

SlicePlan toy_plan(SyncMode mode, uint32_t servers) {
  const ModelProfile p = builtin_profile("toy3");
  return mode == SyncMode::p3 ? make_p3_plan(p, servers) : make_baseline_plan(p, servers);
}

Frame push(const Slice& s, uint16_t rank, uint64_t it, float value) {
  Frame f;
  f.type = MsgType::push;
  f.priority = s.priority.value;
  f.iteration = it;
  f.worker_rank = rank;
  f.layer_index = s.key.layer_index;
  f.slice_index = s.key.slice_index;
  f.offset = s.offset;
  f.values.assign(s.len, value);
  return f;
}

TEST(ServerEngine, P3BroadcastsToEveryWorker) {
  const SlicePlan plan = toy_plan(SyncMode::p3, 1);
  ServerEngine e(plan, 0, 4);
  for (uint16_t r = 0; r < 4; ++r) e.register_worker(r);
  const Slice& s = plan.slices_of_layer(1)[0];
  for (uint16_t r = 0; r < 3; ++r) EXPECT_TRUE(e.handle(push(s, r, 0, 1.0f)).empty());
  auto out = e.handle(push(s, 3, 0, 1.0f));
  ASSERT_EQ(out.size(), 4u);
  for (uint16_t r = 0; r < 4; ++r) {
    EXPECT_EQ(out[r].worker_rank, r);
    EXPECT_EQ(out[r].frame.type, MsgType::bcast);
    EXPECT_EQ(out[r].frame.iteration, 0u);
    EXPECT_EQ(out[r].frame.priority, 1u);
    EXPECT_EQ(out[r].frame.values, out[0].frame.values);
  }
  EXPECT_THROW(e.handle(push(s, 0, 0, 1.0f)), ProtocolError);  // iteration passed
}

TEST(ServerEngine, BaselineNotifyThenPull) {
  const SlicePlan plan = toy_plan(SyncMode::baseline, 1);
  ServerEngine e(plan, 0, 4);
  for (uint16_t r = 0; r < 4; ++r) e.register_worker(r);
  const Slice& s = plan.slices_of_layer(0)[0];
  Frame pull = push(s, 2, 0, 0);
  pull.type = MsgType::pull;
  pull.values.clear();
  EXPECT_THROW(e.handle(pull), ProtocolError);  // nothing aggregated yet
  std::vector<Outgoing> notes;
  for (uint16_t r = 0; r < 4; ++r) notes = e.handle(push(s, r, 0, 2.0f));
  ASSERT_EQ(notes.size(), 4u);
  for (const auto& n : notes) {
    EXPECT_EQ(n.frame.type, MsgType::notify);
    EXPECT_TRUE(n.frame.values.empty());
  }
  for (uint16_t r = 0; r < 4; ++r) {
    pull.worker_rank = r;
    auto reply = e.handle(pull);
    ASSERT_EQ(reply.size(), 1u);
    EXPECT_EQ(reply[0].worker_rank, r);
    EXPECT_EQ(reply[0].frame.type, MsgType::bcast);
    EXPECT_EQ(reply[0].frame.values.size(), s.len);
  }
}

TEST(ServerEngine, Registration) {
  const SlicePlan plan = toy_plan(SyncMode::p3, 1);
  ServerEngine e(plan, 0, 2);
  EXPECT_FALSE(e.all_registered());
  e.register_worker(1);
  EXPECT_THROW(e.register_worker(1), ProtocolError);
  EXPECT_THROW(e.register_worker(2), ProtocolError);
  e.register_worker(0);
  EXPECT_TRUE(e.all_registered());
}

TEST(ServerEngine, RejectsForeignKeysAndBadFrames) {
  const SlicePlan plan = toy_plan(SyncMode::p3, 3);
  ServerEngine e(plan, 0, 1);
  e.register_worker(0);
  const Slice& mine = plan.slices_of_layer(0)[0];
  const Slice& other = plan.slices_of_layer(1)[0];
  ASSERT_EQ(mine.server, 0u);
  ASSERT_NE(other.server, 0u);
  EXPECT_THROW(e.handle(push(other, 0, 0, 1)), ProtocolError);
  Frame pull = push(mine, 0, 0, 0);
  pull.type = MsgType::pull;
  pull.values.clear();
  EXPECT_THROW(e.handle(pull), ProtocolError);  // no PULL in p3 mode
  Frame hello;
  EXPECT_THROW(e.handle(hello), ProtocolError);
  Frame off = push(mine, 0, 0, 1);
  off.offset = 1;
  EXPECT_THROW(e.handle(off), ProtocolError);
}

TEST(ServerEngine, DispatchNeedsRegisteredWorkers) {
  const SlicePlan plan = toy_plan(SyncMode::p3, 1);
  ServerEngine e(plan, 0, 2);
  e.register_worker(0);
  const Slice& s = plan.slices_of_layer(0)[0];
  e.handle(push(s, 0, 0, 1));
  EXPECT_THROW(e.handle(push(s, 1, 0, 1)), ProtocolError);
}

TEST(ServerEngine, ShardDumpRoundTripAndAssembly) {
  const ModelProfile profile = builtin_profile("toy3");
  const SlicePlan plan = make_p3_plan(profile, 2);
  std::vector<std::vector<ShardDump>> dumps;
  for (uint32_t r = 0; r < 2; ++r) {
    ServerEngine e(plan, r, 1);
    const auto path = std::filesystem::temp_directory_path() /
                      ("p3_shards_" + std::to_string(r) + ".bin");
    e.write_shards(path);
    dumps.push_back(read_shards(path));
    std::filesystem::remove(path);
    EXPECT_EQ(dumps.back().size(), e.shards().size());
  }
  const ModelParams params = assemble_from_shards(profile, dumps);
  for (uint32_t l = 0; l < 3; ++l)
    for (uint64_t i = 0; i < 10; ++i) EXPECT_EQ(params[l][i], initial_param(l, i));
  dumps[1].clear();
  EXPECT_THROW(assemble_from_shards(profile, dumps), std::runtime_error);
}

TEST(Digest, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "p3_digest.txt";
  write_digest_file(path, 0x0123456789ABCDEFULL);
  EXPECT_EQ(read_digest_file(path), 0x0123456789ABCDEFULL);
  EXPECT_EQ(digest_hex(0xABCULL), "0x0000000000000abc");
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace p3
