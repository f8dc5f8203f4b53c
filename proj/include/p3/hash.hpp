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

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>

namespace p3 {

inline constexpr uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

/// One splitmix64 step applied to `x` (state advanced by the golden gamma,
/// then the standard finalizer).
constexpr uint64_t splitmix64(uint64_t x) {
  uint64_t z = x + kGoldenGamma;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Sequential splitmix64 stream.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(uint64_t seed) : state_(seed) {}

  constexpr uint64_t next() {
    uint64_t out = splitmix64(state_);
    state_ += kGoldenGamma;
    return out;
  }

 private:
  uint64_t state_;
};

inline constexpr uint64_t kFnvOffsetBasis = 0xCBF29CE484222325ULL;
inline constexpr uint64_t kFnvPrime = 0x100000001B3ULL;

constexpr uint64_t fnv1a64(std::span<const std::byte> bytes,
                           uint64_t h = kFnvOffsetBasis) {
  for (std::byte b : bytes) {
    h ^= static_cast<uint64_t>(b);
    h *= kFnvPrime;
  }
  return h;
}

/// FNV-1a over the little-endian bytes of each float.
inline uint64_t fnv1a64_floats(std::span<const float> values,
                               uint64_t h = kFnvOffsetBasis) {
  for (float v : values) {
    uint32_t bits = std::bit_cast<uint32_t>(v);
    for (int i = 0; i < 4; ++i) {
      h ^= static_cast<uint64_t>((bits >> (8 * i)) & 0xFFu);
      h *= kFnvPrime;
    }
  }
  return h;
}

}  // namespace p3
