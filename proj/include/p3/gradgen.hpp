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

#include "p3/hash.hpp"

namespace p3 {

inline constexpr uint64_t kIterationMix = 0x9E3779B97F4A7C15ULL;
inline constexpr uint64_t kLayerMix = 0xC2B2AE3D27D4EB4FULL;
inline constexpr uint64_t kElementMix = 0x165667B19E3779F9ULL;

/// Synthetic gradient for one element: a pure function of its inputs, in
/// [-1, 1) with 24 bits of resolution, identical on every platform.
constexpr float gradient_of(uint64_t seed, uint64_t iteration, uint32_t layer,
                            uint64_t element) {
  const uint64_t h = splitmix64(seed ^ (iteration * kIterationMix) ^
                                (uint64_t{layer} * kLayerMix) ^
                                (element * kElementMix));
  const uint32_t top24 = static_cast<uint32_t>(h >> 40);
  return static_cast<float>(top24) * (1.0f / 8388608.0f) - 1.0f;
}

/// Gradient stream of one worker.
class GradGen {
 public:
  explicit constexpr GradGen(uint64_t seed) : seed_(seed) {}

  constexpr float operator()(uint64_t iteration, uint32_t layer,
                             uint64_t element) const {
    return gradient_of(seed_, iteration, layer, element);
  }

  constexpr uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
};

/// Distinct, reproducible gradient seed per worker rank.
constexpr uint64_t worker_seed(uint64_t profile_seed, uint16_t rank) {
  return splitmix64(profile_seed ^ ((uint64_t{rank} + 1) * 0xD1B54A32D192ED03ULL));
}

inline constexpr uint64_t kInitSeed = 0x5EED5EED5EED5EEDULL;

/// Parameter value before iteration 0. Workers and servers compute it
/// independently, so it depends only on the element's position.
constexpr float initial_param(uint32_t layer, uint64_t element) {
  return 0.125f * gradient_of(kInitSeed, 0, layer, element);
}

}  // namespace p3
