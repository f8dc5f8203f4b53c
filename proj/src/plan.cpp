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

#include "p3/plan.hpp"

#include <algorithm>
#include <charconv>
#include <sstream>
#include <stdexcept>

#include "p3/hash.hpp"

namespace p3 {

std::string_view to_string(SyncMode mode) {
  return mode == SyncMode::p3 ? "p3" : "baseline";
}

std::optional<SyncMode> parse_sync_mode(std::string_view text) {
  if (text == "p3") return SyncMode::p3;
  if (text == "baseline") return SyncMode::baseline;
  return std::nullopt;
}

std::strong_ordering compare_priority(Priority a_prio, SliceKey a_key,
                                      Priority b_prio, SliceKey b_key) {
  if (auto c = a_prio.value <=> b_prio.value; c != 0) return c;
  if (auto c = a_key.layer_index <=> b_key.layer_index; c != 0) return c;
  return a_key.slice_index <=> b_key.slice_index;
}

SlicePlan::SlicePlan(SyncMode mode, std::vector<Slice> slices,
                     uint32_t num_servers, uint64_t max_slice,
                     uint64_t big_threshold, uint64_t rng_seed)
    : mode_(mode),
      slices_(std::move(slices)),
      num_servers_(num_servers),
      max_slice_(max_slice),
      big_threshold_(big_threshold),
      rng_seed_(rng_seed) {
  std::sort(slices_.begin(), slices_.end(),
            [](const Slice& a, const Slice& b) { return a.key < b.key; });
  if (slices_.empty()) return;
  // layer_begin_[l] is the first slice of layer l; a layer with no slices
  // gets an empty range.
  for (size_t i = 0; i < slices_.size(); ++i) {
    const size_t layer = slices_[i].key.layer_index;
    while (layer_begin_.size() <= layer) layer_begin_.push_back(i);
  }
  layer_begin_.push_back(slices_.size());
}

std::span<const Slice> SlicePlan::slices_of_layer(uint32_t layer_index) const {
  if (layer_index >= num_layers())
    throw std::out_of_range("unknown layer " + std::to_string(layer_index));
  const size_t b = layer_begin_[layer_index];
  const size_t e = layer_begin_[layer_index + 1];
  return std::span<const Slice>(slices_).subspan(b, e - b);
}

const Slice* SlicePlan::find(SliceKey key) const {
  if (key.layer_index >= num_layers()) return nullptr;
  auto layer = slices_of_layer(key.layer_index);
  if (key.slice_index >= layer.size()) return nullptr;
  return &layer[key.slice_index];
}

uint64_t SlicePlan::layer_param_count(uint32_t layer_index) const {
  auto layer = slices_of_layer(layer_index);
  return layer.back().offset + layer.back().len;
}

SlicePlan make_p3_plan(const ModelProfile& profile, uint32_t num_servers,
                       uint64_t max_slice) {
  if (num_servers == 0) throw std::invalid_argument("num_servers must be >= 1");
  if (max_slice == 0) throw std::invalid_argument("max_slice must be >= 1");
  std::vector<Slice> slices;
  uint64_t counter = 0;
  for (const LayerSpec& layer : profile.layers) {
    uint32_t slice_index = 0;
    for (uint64_t off = 0; off < layer.param_count; off += max_slice) {
      Slice s;
      s.key = {layer.index, slice_index++};
      s.offset = off;
      s.len = std::min(max_slice, layer.param_count - off);
      s.priority = {layer.index};
      s.server = static_cast<uint32_t>(counter++ % num_servers);
      slices.push_back(s);
    }
  }
  return SlicePlan(SyncMode::p3, std::move(slices), num_servers, max_slice,
                   kDefaultBigThreshold, 0);
}

SlicePlan make_baseline_plan(const ModelProfile& profile, uint32_t num_servers,
                             uint64_t big_threshold, uint64_t rng_seed) {
  if (num_servers == 0) throw std::invalid_argument("num_servers must be >= 1");
  std::vector<Slice> slices;
  SplitMix64 rng(rng_seed);
  for (const LayerSpec& layer : profile.layers) {
    const uint64_t draw = rng.next();
    if (layer.param_count < big_threshold) {
      Slice s;
      s.key = {layer.index, 0};
      s.offset = 0;
      s.len = layer.param_count;
      s.priority = {layer.index};
      s.server = static_cast<uint32_t>(draw % num_servers);
      slices.push_back(s);
      continue;
    }
    const uint64_t part = layer.param_count / num_servers;
    for (uint32_t i = 0; i < num_servers; ++i) {
      Slice s;
      s.key = {layer.index, i};
      s.offset = part * i;
      s.len = (i + 1 == num_servers) ? layer.param_count - s.offset : part;
      s.priority = {layer.index};
      s.server = i;
      // A layer smaller than the server count would produce empty parts.
      if (s.len == 0) throw std::invalid_argument("layer too small to split");
      slices.push_back(s);
    }
  }
  return SlicePlan(SyncMode::baseline, std::move(slices), num_servers,
                   kDefaultMaxSlice, big_threshold, rng_seed);
}

std::vector<Slice> slices_of_layer(const SlicePlan& plan, uint32_t layer_index) {
  auto s = plan.slices_of_layer(layer_index);
  return {s.begin(), s.end()};
}

std::string plan_to_csv(const SlicePlan& plan) {
  std::ostringstream os;
  os << "layer,slice,offset,len,priority,server\n";
  for (const Slice& s : plan.slices()) {
    os << s.key.layer_index << ',' << s.key.slice_index << ',' << s.offset << ','
       << s.len << ',' << s.priority.value << ',' << s.server << '\n';
  }
  return os.str();
}

namespace {

uint64_t parse_field(std::string_view field, size_t line_no) {
  uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size())
    throw std::invalid_argument("plan csv line " + std::to_string(line_no) +
                                ": bad number '" + std::string(field) + "'");
  return v;
}

void check_layer(const SlicePlan& plan, uint32_t layer, uint64_t expected_count) {
  auto slices = plan.slices_of_layer(layer);
  uint64_t next = 0;
  for (size_t i = 0; i < slices.size(); ++i) {
    const Slice& s = slices[i];
    if (s.key.slice_index != i)
      throw std::invalid_argument("layer " + std::to_string(layer) +
                                  ": slice indices not contiguous");
    if (s.len == 0 || s.offset != next)
      throw std::invalid_argument("layer " + std::to_string(layer) +
                                  ": slices overlap or leave a gap");
    if (s.server >= plan.num_servers())
      throw std::invalid_argument("layer " + std::to_string(layer) +
                                  ": server rank out of range");
    if (plan.mode() == SyncMode::p3 && s.len > plan.max_slice())
      throw std::invalid_argument("layer " + std::to_string(layer) +
                                  ": slice longer than max_slice");
    next = s.offset + s.len;
  }
  if (expected_count != 0 && next != expected_count)
    throw std::invalid_argument("layer " + std::to_string(layer) +
                                ": slices do not cover the layer");
}

}  // namespace

SlicePlan plan_from_csv(std::string_view csv, SyncMode mode,
                        std::optional<uint32_t> num_servers) {
  std::vector<Slice> slices;
  size_t line_no = 0;
  uint32_t max_server = 0;
  uint64_t max_len = 1;
  while (!csv.empty()) {
    const size_t nl = csv.find('\n');
    std::string_view line = csv.substr(0, nl);
    csv = nl == std::string_view::npos ? std::string_view{} : csv.substr(nl + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.starts_with("layer,")) continue;
    uint64_t f[6];
    for (int i = 0; i < 6; ++i) {
      const size_t comma = line.find(',');
      if ((comma == std::string_view::npos) != (i == 5))
        throw std::invalid_argument("plan csv line " + std::to_string(line_no) +
                                    ": expected 6 fields");
      f[i] = parse_field(line.substr(0, comma), line_no);
      if (comma != std::string_view::npos) line.remove_prefix(comma + 1);
    }
    Slice s;
    s.key = {static_cast<uint32_t>(f[0]), static_cast<uint32_t>(f[1])};
    s.offset = f[2];
    s.len = f[3];
    s.priority = {static_cast<uint32_t>(f[4])};
    s.server = static_cast<uint32_t>(f[5]);
    max_server = std::max(max_server, s.server);
    max_len = std::max(max_len, s.len);
    slices.push_back(s);
  }
  if (slices.empty()) throw std::invalid_argument("plan csv has no slices");
  const uint32_t servers = num_servers.value_or(max_server + 1);
  SlicePlan plan(mode, std::move(slices), servers,
                 mode == SyncMode::p3 ? max_len : kDefaultMaxSlice,
                 kDefaultBigThreshold, 0);
  for (uint32_t l = 0; l < plan.num_layers(); ++l) {
    if (plan.slices_of_layer(l).empty())
      throw std::invalid_argument("plan csv: layer " + std::to_string(l) +
                                  " has no slices");
    check_layer(plan, l, 0);
  }
  return plan;
}

void check_coverage(const SlicePlan& plan, const ModelProfile& profile) {
  if (plan.num_layers() != profile.layers.size())
    throw std::invalid_argument("plan layer count differs from profile");
  for (const LayerSpec& layer : profile.layers) {
    check_layer(plan, layer.index, layer.param_count);
  }
}

}  // namespace p3
