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

#include "p3/kernels.hpp"

#include <stdexcept>

namespace p3::kernels {

namespace {

void check_shapes(std::span<const std::span<const float>> grads,
                  std::span<float> params) {
  if (grads.empty()) throw std::invalid_argument("aggregate_update: no gradients");
  for (const auto& g : grads) {
    if (g.size() != params.size())
      throw std::invalid_argument("aggregate_update: length mismatch");
  }
}

}  // namespace

void fill_gradients(const GradGen& gen, uint64_t iteration, uint32_t layer,
                    uint64_t offset, std::span<float> out) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(out.size());
  float* dst = out.data();
#pragma omp parallel for schedule(static) if (out.size() >= kParallelMin)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    dst[i] = gen(iteration, layer, offset + static_cast<uint64_t>(i));
  }
}

void fill_initial(uint32_t layer, uint64_t offset, std::span<float> out) {
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(out.size());
  float* dst = out.data();
#pragma omp parallel for schedule(static) if (out.size() >= kParallelMin)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    dst[i] = initial_param(layer, offset + static_cast<uint64_t>(i));
  }
}

void aggregate_update(std::span<const std::span<const float>> grads, float lr,
                      std::span<float> params) {
  check_shapes(grads, params);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(params.size());
  const std::size_t ranks = grads.size();
  const float count = static_cast<float>(ranks);
  float* p = params.data();
#pragma omp parallel for schedule(static) if (params.size() >= kParallelMin)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    float sum = 0.0f;
    for (std::size_t r = 0; r < ranks; ++r) sum += grads[r][i];
    const float g = sum / count;
    p[i] = p[i] - lr * g;
  }
}

namespace reference {

void fill_gradients(const GradGen& gen, uint64_t iteration, uint32_t layer,
                    uint64_t offset, std::span<float> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gen(iteration, layer, offset + i);
}

void fill_initial(uint32_t layer, uint64_t offset, std::span<float> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = initial_param(layer, offset + i);
}

void aggregate_update(std::span<const std::span<const float>> grads, float lr,
                      std::span<float> params) {
  check_shapes(grads, params);
  const float count = static_cast<float>(grads.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    float sum = 0.0f;
    for (const auto& g : grads) sum += g[i];
    params[i] = params[i] - lr * (sum / count);
  }
}

}  // namespace reference

}  // namespace p3::kernels
