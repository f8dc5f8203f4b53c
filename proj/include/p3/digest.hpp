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

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "p3/model.hpp"
#include "p3/server.hpp"

namespace p3 {

/// Per-layer parameter vectors of a whole model.
using ModelParams = std::vector<std::vector<float>>;

/// 64-bit FNV-1a over every parameter's little-endian bytes, layers in order.
uint64_t params_digest(const ModelParams& params);

std::string digest_hex(uint64_t digest);

/// Writes "fnv1a64=0x<16 hex digits>\n".
void write_digest_file(const std::filesystem::path& path, uint64_t digest);
uint64_t read_digest_file(const std::filesystem::path& path);

/// Rebuilds the full model from the shard dumps of every server. Throws
/// std::runtime_error if any element is missing or covered twice.
ModelParams assemble_from_shards(const ModelProfile& profile,
                                 std::span<const std::vector<ShardDump>> servers);

}  // namespace p3
