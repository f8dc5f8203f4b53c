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


// Serial reference kernels against their OpenMP versions, and the slice-size
// sweep run serially and in parallel.

#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "p3/kernels.hpp"
#include "p3/sim.hpp"

namespace {

using namespace p3;

void BM_FillGradients(benchmark::State& state, bool parallel) {
  const GradGen gen(worker_seed(1, 0));
  std::vector<float> out(static_cast<size_t>(state.range(0)));
  for (auto _ : state) {
    if (parallel) {
      kernels::fill_gradients(gen, 3, 7, 0, out);
    } else {
      kernels::reference::fill_gradients(gen, 3, 7, 0, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_AggregateUpdate(benchmark::State& state, bool parallel) {
  const size_t n = static_cast<size_t>(state.range(0));
  constexpr int kWorkers = 4;
  std::vector<std::vector<float>> grads(kWorkers, std::vector<float>(n));
  for (int w = 0; w < kWorkers; ++w) {
    kernels::reference::fill_gradients(GradGen(worker_seed(1, w)), 0, 0, 0, grads[w]);
  }
  std::vector<std::span<const float>> views(grads.begin(), grads.end());
  std::vector<float> params(n);
  kernels::reference::fill_initial(0, 0, params);
  for (auto _ : state) {
    if (parallel) {
      kernels::aggregate_update(views, 0.1f, params);
    } else {
      kernels::reference::aggregate_update(views, 0.1f, params);
    }
    benchmark::DoNotOptimize(params.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

sim::Scenario huge_layer() {
  sim::Scenario sc;
  sc.profile.name = "huge";
  sc.profile.layers.push_back({0, "l0", 1000, 4, 4});
  sc.costs = {{4096, 4096, 4096}};
  sc.per_slice_overhead = 1;
  return sc;
}

void BM_Sweep(benchmark::State& state, bool parallel) {
  const sim::Scenario sc = huge_layer();
  std::vector<uint64_t> sizes(static_cast<size_t>(state.range(0)));
  std::iota(sizes.begin(), sizes.end(), 1);
  for (auto _ : state) {
    auto points = parallel ? sim::sweep_slice_size(sc, sizes)
                           : sim::reference::sweep_slice_size(sc, sizes);
    benchmark::DoNotOptimize(points.data());
  }
}

BENCHMARK_CAPTURE(BM_FillGradients, serial, false)->Range(1 << 12, 1 << 22);
BENCHMARK_CAPTURE(BM_FillGradients, openmp, true)->Range(1 << 12, 1 << 22);
BENCHMARK_CAPTURE(BM_AggregateUpdate, serial, false)->Range(1 << 12, 1 << 22);
BENCHMARK_CAPTURE(BM_AggregateUpdate, openmp, true)->Range(1 << 12, 1 << 22);
BENCHMARK_CAPTURE(BM_Sweep, serial, false)->Arg(16)->Arg(64);
BENCHMARK_CAPTURE(BM_Sweep, openmp, true)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
