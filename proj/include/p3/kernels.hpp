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

// Element-wise kernels on parameter/gradient vectors. The default entry points
// are OpenMP-parallel; `reference::` holds the serial versions they are tested
// and benchmarked against. Both produce bit-identical output: every element
// goes through the same sequence of float operations, only the loop is split.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

#include "p3/gradgen.hpp"

namespace p3::kernels {

/// Below this many elements the parallel kernels stay on the calling thread.
inline constexpr std::size_t kParallelMin = 1 << 14;

/// out[i] = gen(iteration, layer, offset + i)
void fill_gradients(const GradGen& gen, uint64_t iteration, uint32_t layer,
                    uint64_t offset, std::span<float> out);

/// out[i] = initial_param(layer, offset + i)
void fill_initial(uint32_t layer, uint64_t offset, std::span<float> out);

/// Synchronous SGD step over one slice:
///   g = (sum over ranks, ascending, of grads[r][i]) / grads.size()
///   params[i] -= lr * g
/// All gradient vectors must have params.size() elements.
void aggregate_update(std::span<const std::span<const float>> grads, float lr,
                      std::span<float> params);

namespace reference {

void fill_gradients(const GradGen& gen, uint64_t iteration, uint32_t layer,
                    uint64_t offset, std::span<float> out);
void fill_initial(uint32_t layer, uint64_t offset, std::span<float> out);
void aggregate_update(std::span<const std::span<const float>> grads, float lr,
                      std::span<float> params);

}  // namespace reference

}  // namespace p3::kernels
