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

#include "p3/server.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include "p3/hash.hpp"
#include "p3/kernels.hpp"

namespace p3 {

namespace {

std::string key_text(SliceKey key) {
  std::ostringstream os;
  os << "L" << key.layer_index << "/S" << key.slice_index;
  return os.str();
}

template <typename T>
void write_le(std::ostream& out, T value) {
  char bytes[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bytes[i] = static_cast<char>((static_cast<uint64_t>(value) >> (8 * i)) & 0xFF);
  out.write(bytes, sizeof(T));
}

template <typename T>
bool read_le(std::istream& in, T& value) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) return false;
  uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= uint64_t{bytes[i]} << (8 * i);
  value = static_cast<T>(v);
  return true;
}

}  // namespace

ShardState::ShardState(const Slice& slice, std::vector<float> params,
                       uint16_t num_workers, float lr)
    : slice_(slice),
      params_(std::move(params)),
      pending_(num_workers),
      num_workers_(num_workers),
      lr_(lr) {
  if (num_workers == 0) throw std::invalid_argument("num_workers must be >= 1");
  if (params_.size() != slice.len)
    throw std::invalid_argument("shard params do not match slice length");
}

PushStatus ShardState::on_push(uint16_t worker_rank, uint64_t iteration,
                               std::vector<float> grad) {
  const std::string where = key_text(slice_.key);
  if (iteration != iteration_)
    throw ProtocolError(where + ": push for iteration " + std::to_string(iteration) +
                        " while at iteration " + std::to_string(iteration_));
  if (worker_rank >= num_workers_)
    throw ProtocolError(where + ": push from unknown rank " + std::to_string(worker_rank));
  if (pending_[worker_rank])
    throw ProtocolError(where + ": duplicate push from rank " + std::to_string(worker_rank));
  if (grad.size() != params_.size())
    throw ProtocolError(where + ": gradient of " + std::to_string(grad.size()) +
                        " elements, expected " + std::to_string(params_.size()));
  pending_[worker_rank] = std::move(grad);
  ++pushed_;
  return ready() ? PushStatus::ready : PushStatus::waiting;
}

std::span<const float> ShardState::aggregate_and_update() {
  if (!ready())
    throw ProtocolError(key_text(slice_.key) + ": aggregate before all " +
                        std::to_string(num_workers_) + " workers pushed");
  std::vector<std::span<const float>> grads;
  grads.reserve(num_workers_);
  for (const auto& g : pending_) grads.emplace_back(*g);
  kernels::aggregate_update(grads, lr_, params_);
  for (auto& g : pending_) g.reset();
  pushed_ = 0;
  ++iteration_;
  return params_;
}

ServerEngine::ServerEngine(const SlicePlan& plan, uint32_t server_rank,
                           uint16_t num_workers, float lr)
    : mode_(plan.mode()),
      rank_(server_rank),
      num_workers_(num_workers),
      registered_(num_workers, false) {
  if (server_rank >= plan.num_servers())
    throw std::invalid_argument("server rank " + std::to_string(server_rank) +
                                " outside plan of " + std::to_string(plan.num_servers()));
  for (const Slice& s : plan.slices()) {
    if (s.server != server_rank) continue;
    std::vector<float> params(s.len);
    kernels::fill_initial(s.key.layer_index, s.offset, params);
    shards_.emplace(s.key, ShardState(s, std::move(params), num_workers, lr));
  }
}

void ServerEngine::register_worker(uint16_t rank) {
  std::lock_guard<std::mutex> lock(reg_mu_);
  if (rank >= num_workers_)
    throw ProtocolError("HELLO from rank " + std::to_string(rank) + " but only " +
                        std::to_string(num_workers_) + " workers configured");
  if (registered_[rank])
    throw ProtocolError("duplicate HELLO from rank " + std::to_string(rank));
  registered_[rank] = true;
}

bool ServerEngine::all_registered() const {
  std::lock_guard<std::mutex> lock(reg_mu_);
  for (bool r : registered_)
    if (!r) return false;
  return true;
}

ShardState& ServerEngine::shard_for(const Frame& frame) {
  auto it = shards_.find(frame.key());
  if (it == shards_.end())
    throw ProtocolError(std::string(to_string(frame.type)) + " for " +
                        key_text(frame.key()) + " which server " +
                        std::to_string(rank_) + " does not own");
  if (frame.offset != it->second.slice().offset)
    throw ProtocolError(key_text(frame.key()) + ": offset mismatch");
  return it->second;
}

std::vector<Outgoing> ServerEngine::handle(Frame frame) {
  switch (frame.type) {
    case MsgType::push: {
      ShardState& shard = shard_for(frame);
      if (shard.on_push(frame.worker_rank, frame.iteration, std::move(frame.values)) ==
          PushStatus::waiting)
        return {};
      shard.aggregate_and_update();
      return mode_ == SyncMode::p3 ? dispatch_p3(shard) : dispatch_baseline(shard);
    }
    case MsgType::pull:
      if (mode_ != SyncMode::baseline)
        throw ProtocolError("PULL received in p3 mode");
      return on_pull(frame);
    default:
      throw ProtocolError("server cannot handle " + std::string(to_string(frame.type)));
  }
}

Frame ServerEngine::param_frame(const ShardState& shard, MsgType type,
                                uint16_t to) const {
  Frame f;
  f.type = type;
  f.priority = shard.slice().priority.value;
  // Tagged with the iteration whose pushes produced these parameters.
  f.iteration = shard.iteration() - 1;
  f.worker_rank = to;
  f.layer_index = shard.key().layer_index;
  f.slice_index = shard.key().slice_index;
  f.offset = shard.slice().offset;
  if (type == MsgType::bcast) f.values.assign(shard.params().begin(), shard.params().end());
  return f;
}

std::vector<Outgoing> ServerEngine::dispatch_p3(const ShardState& shard) const {
  if (!all_registered()) throw ProtocolError("broadcast with unregistered workers");
  if (shard.iteration() == 0) throw ProtocolError("broadcast before any update");
  std::vector<Outgoing> out;
  out.reserve(num_workers_);
  for (uint16_t w = 0; w < num_workers_; ++w)
    out.push_back({w, param_frame(shard, MsgType::bcast, w)});
  return out;
}

std::vector<Outgoing> ServerEngine::dispatch_baseline(const ShardState& shard) const {
  if (!all_registered()) throw ProtocolError("notify with unregistered workers");
  if (shard.iteration() == 0) throw ProtocolError("notify before any update");
  std::vector<Outgoing> out;
  out.reserve(num_workers_);
  for (uint16_t w = 0; w < num_workers_; ++w)
    out.push_back({w, param_frame(shard, MsgType::notify, w)});
  return out;
}

std::vector<Outgoing> ServerEngine::on_pull(const Frame& pull) const {
  auto it = shards_.find(pull.key());
  if (it == shards_.end())
    throw ProtocolError("PULL for " + key_text(pull.key()) + " which server " +
                        std::to_string(rank_) + " does not own");
  const ShardState& shard = it->second;
  if (shard.iteration() != pull.iteration + 1)
    throw ProtocolError("PULL for " + key_text(pull.key()) + " iteration " +
                        std::to_string(pull.iteration) + " before its aggregation");
  if (pull.worker_rank >= num_workers_)
    throw ProtocolError("PULL from unknown rank " + std::to_string(pull.worker_rank));
  return {{pull.worker_rank, param_frame(shard, MsgType::bcast, pull.worker_rank)}};
}

const ShardState* ServerEngine::shard(SliceKey key) const {
  auto it = shards_.find(key);
  return it == shards_.end() ? nullptr : &it->second;
}

std::vector<const ShardState*> ServerEngine::shards() const {
  std::vector<const ShardState*> out;
  out.reserve(shards_.size());
  for (const auto& [key, s] : shards_) out.push_back(&s);
  return out;
}

uint64_t ServerEngine::digest() const {
  uint64_t h = kFnvOffsetBasis;
  for (const auto& [key, s] : shards_) h = fnv1a64_floats(s.params(), h);
  return h;
}

void ServerEngine::write_shards(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& [key, s] : shards_) {
    write_le<uint32_t>(out, key.layer_index);
    write_le<uint32_t>(out, key.slice_index);
    write_le<uint64_t>(out, s.slice().offset);
    write_le<uint64_t>(out, s.slice().len);
    for (float v : s.params()) write_le<uint32_t>(out, std::bit_cast<uint32_t>(v));
  }
}

std::vector<ShardDump> read_shards(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::vector<ShardDump> out;
  for (;;) {
    ShardDump d;
    if (!read_le(in, d.slice.key.layer_index)) break;
    if (!read_le(in, d.slice.key.slice_index) || !read_le(in, d.slice.offset) ||
        !read_le(in, d.slice.len))
      throw std::runtime_error(path.string() + ": truncated shard header");
    d.values.resize(d.slice.len);
    for (float& v : d.values) {
      uint32_t bits = 0;
      if (!read_le(in, bits)) throw std::runtime_error(path.string() + ": truncated shard");
      v = std::bit_cast<float>(bits);
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace p3
