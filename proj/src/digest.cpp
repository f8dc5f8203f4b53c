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

#include "p3/digest.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "p3/hash.hpp"

namespace p3 {

uint64_t params_digest(const ModelParams& params) {
  uint64_t h = kFnvOffsetBasis;
  for (const auto& layer : params) h = fnv1a64_floats(layer, h);
  return h;
}

std::string digest_hex(uint64_t digest) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "0x%016" PRIx64, digest);
  return buf;
}

void write_digest_file(const std::filesystem::path& path, uint64_t digest) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "fnv1a64=" << digest_hex(digest) << '\n';
}

uint64_t read_digest_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::string line;
  if (!in || !std::getline(in, line) || !line.starts_with("fnv1a64=0x"))
    throw std::runtime_error("bad digest file " + path.string());
  return std::stoull(line.substr(10), nullptr, 16);
}

ModelParams assemble_from_shards(const ModelProfile& profile,
                                 std::span<const std::vector<ShardDump>> servers) {
  ModelParams params(profile.layers.size());
  std::vector<std::vector<bool>> seen(profile.layers.size());
  for (const LayerSpec& l : profile.layers) {
    params[l.index].assign(l.param_count, 0.0f);
    seen[l.index].assign(l.param_count, false);
  }
  for (const auto& dumps : servers) {
    for (const ShardDump& d : dumps) {
      const uint32_t layer = d.slice.key.layer_index;
      if (layer >= params.size() || d.slice.offset + d.slice.len > params[layer].size())
        throw std::runtime_error("shard outside the model");
      for (uint64_t i = 0; i < d.slice.len; ++i) {
        if (seen[layer][d.slice.offset + i])
          throw std::runtime_error("element covered by two shards");
        seen[layer][d.slice.offset + i] = true;
        params[layer][d.slice.offset + i] = d.values[i];
      }
    }
  }
  for (const auto& layer : seen)
    for (bool s : layer)
      if (!s) throw std::runtime_error("element missing from every shard");
  return params;
}

}  // namespace p3
