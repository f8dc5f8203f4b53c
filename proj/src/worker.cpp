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

#include "p3/worker.hpp"

#include <algorithm>
#include <sstream>

#include "p3/kernels.hpp"

namespace p3 {

void enqueue_layer(const SlicePlan& plan, uint32_t layer_index, uint64_t iteration,
                   std::span<Outbox* const> queues) {
  auto slices = plan.slices_of_layer(layer_index);
  if (plan.mode() == SyncMode::p3) {
    std::vector<SendItem> items;
    items.reserve(slices.size());
    for (const Slice& s : slices) items.push_back({s, iteration, MsgType::push});
    queues.front()->push_all(std::move(items));
    return;
  }
  for (const Slice& s : slices) queues[s.server]->push({s, iteration, MsgType::push});
}

Frame make_push(const GradGen& gen, uint16_t rank, const Slice& slice,
                uint64_t iteration) {
  Frame f;
  f.type = MsgType::push;
  f.priority = slice.priority.value;
  f.iteration = iteration;
  f.worker_rank = rank;
  f.layer_index = slice.key.layer_index;
  f.slice_index = slice.key.slice_index;
  f.offset = slice.offset;
  f.values.resize(slice.len);
  kernels::fill_gradients(gen, iteration, slice.key.layer_index, slice.offset, f.values);
  return f;
}

Frame make_pull(uint16_t rank, const Slice& slice, uint64_t iteration) {
  Frame f;
  f.type = MsgType::pull;
  f.priority = slice.priority.value;
  f.iteration = iteration;
  f.worker_rank = rank;
  f.layer_index = slice.key.layer_index;
  f.slice_index = slice.key.slice_index;
  f.offset = slice.offset;
  return f;
}

ParamStore::ParamStore(const SlicePlan& plan)
    : plan_(plan),
      params_(plan.num_layers()),
      version_(plan.num_layers(), 0),
      slice_version_(plan.num_layers()),
      received_(plan.num_layers(), 0),
      layers_at_{plan.num_layers()},
      reached_at_{Clock::now()} {
  for (uint32_t l = 0; l < plan.num_layers(); ++l) {
    params_[l].resize(plan.layer_param_count(l));
    kernels::fill_initial(l, 0, params_[l]);
    slice_version_[l].assign(plan.slices_of_layer(l).size(), 0);
  }
}

bool ParamStore::apply(const Frame& bcast) {
  if (bcast.type != MsgType::bcast)
    throw ProtocolError("worker cannot apply " + std::string(to_string(bcast.type)));
  const Slice* slice = plan_.find(bcast.key());
  if (slice == nullptr)
    throw ProtocolError("BCAST for unknown slice L" + std::to_string(bcast.layer_index) +
                        "/S" + std::to_string(bcast.slice_index));
  if (slice->offset != bcast.offset || slice->len != bcast.values.size())
    throw ProtocolError("BCAST does not match the plan's slice shape");

  const uint32_t layer = slice->key.layer_index;
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (bcast.iteration != version_[layer])
      throw ProtocolError("BCAST for layer " + std::to_string(layer) + " iteration " +
                          std::to_string(bcast.iteration) + " while layer is at version " +
                          std::to_string(version_[layer]));
    uint64_t& tag = slice_version_[layer][slice->key.slice_index];
    if (tag == bcast.iteration + 1)
      throw ProtocolError("duplicate BCAST for L" + std::to_string(layer) + "/S" +
                          std::to_string(slice->key.slice_index));
    std::copy(bcast.values.begin(), bcast.values.end(),
              params_[layer].begin() + static_cast<std::ptrdiff_t>(slice->offset));
    tag = bcast.iteration + 1;
    if (++received_[layer] < slice_version_[layer].size()) return false;

    received_[layer] = 0;
    const uint64_t v = ++version_[layer];
    if (layers_at_.size() <= v) {
      layers_at_.resize(v + 1, 0);
      reached_at_.resize(v + 1);
    }
    if (++layers_at_[v] == params_.size()) reached_at_[v] = Clock::now();
  }
  cv_.notify_all();
  return true;
}

uint64_t ParamStore::version(uint32_t layer) const {
  std::lock_guard<std::mutex> lock(mu_);
  return version_.at(layer);
}

WaitResult ParamStore::wait_version(uint32_t layer, uint64_t version,
                                    Clock::time_point deadline) {
  std::unique_lock<std::mutex> lock(mu_);
  const bool done = cv_.wait_until(
      lock, deadline, [&] { return aborted_ || version_[layer] >= version; });
  if (aborted_) return WaitResult::aborted;
  return done ? WaitResult::ok : WaitResult::timeout;
}

WaitResult ParamStore::wait_all(uint64_t version, Clock::time_point deadline) {
  for (uint32_t l = 0; l < num_layers(); ++l) {
    if (auto r = wait_version(l, version, deadline); r != WaitResult::ok) return r;
  }
  return WaitResult::ok;
}

std::optional<ParamStore::Clock::time_point> ParamStore::all_reached_at(
    uint64_t version) const {
  std::lock_guard<std::mutex> lock(mu_);
  if (version >= reached_at_.size()) return std::nullopt;
  return reached_at_[version];
}

bool ParamStore::layer_at_version(uint32_t layer, uint64_t version) const {
  std::lock_guard<std::mutex> lock(mu_);
  const auto& tags = slice_version_.at(layer);
  return std::all_of(tags.begin(), tags.end(), [&](uint64_t t) { return t == version; });
}

void ParamStore::abort() {
  {
    std::lock_guard<std::mutex> lock(mu_);
    aborted_ = true;
  }
  cv_.notify_all();
}

std::string ParamStore::pending_report(uint64_t version) const {
  std::lock_guard<std::mutex> lock(mu_);
  std::ostringstream os;
  for (uint32_t l = 0; l < params_.size(); ++l) {
    if (version_[l] >= version) continue;
    os << "layer " << l << " at version " << version_[l] << ", missing slices [";
    const char* sep = "";
    for (size_t s = 0; s < slice_version_[l].size(); ++s) {
      if (slice_version_[l][s] <= version_[l]) {
        os << sep << s;
        sep = ",";
      }
    }
    os << "]; ";
  }
  return os.str();
}

ModelParams ParamStore::snapshot() const {
  std::lock_guard<std::mutex> lock(mu_);
  return params_;
}

uint64_t ParamStore::digest() const {
  std::lock_guard<std::mutex> lock(mu_);
  return params_digest(params_);
}

std::vector<double> iteration_wall_ms(std::span<const IterationMetrics> metrics) {
  std::vector<double> out;
  out.reserve(metrics.size());
  for (size_t i = 0; i < metrics.size(); ++i) {
    const uint64_t end =
        i + 1 < metrics.size() ? metrics[i + 1].fwd_start_us : metrics[i].sync_end_us;
    out.push_back(static_cast<double>(end - metrics[i].fwd_start_us) / 1000.0);
  }
  return out;
}

}  // namespace p3
