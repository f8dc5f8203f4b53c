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


#include "p3/sim.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace p3::sim {
namespace {

constexpr int kNumResources = 4;

struct Task {
  Resource resource;
  Kind kind;
  uint64_t duration;
  uint32_t iteration;
  uint32_t layer;
  uint32_t slice;
  std::vector<size_t> successors;
  uint32_t waiting = 0;  // unfinished predecessors
  uint64_t eligible_at = 0;
  uint64_t start = 0;
  bool done = false;
};

std::string item_name(const Task& t) {
  std::string s = "it" + std::to_string(t.iteration) + "/";
  if (t.kind == Kind::fwd || t.kind == Kind::bwd)
    return s + (t.kind == Kind::fwd ? "fwd" : "bwd") + "/L" + std::to_string(t.layer);
  return s + "L" + std::to_string(t.layer) + "S" + std::to_string(t.slice);
}

// Chunk lengths of `cost` split into n parts, remainder on the last parts.
uint64_t chunk(uint64_t cost, uint64_t n, uint64_t i) {
  const uint64_t base = cost / n;
  const uint64_t rem = cost % n;
  return base + (i >= n - rem ? 1 : 0);
}

class Graph {
 public:
  explicit Graph(const Scenario& sc) : sc_(sc) {
    const uint32_t n = static_cast<uint32_t>(sc.profile.layers.size());
    size_t prev_compute = kNone;
    for (uint32_t k = 0; k < sc.num_iterations; ++k) {
      // downlink tasks of iteration k, per layer
      std::vector<std::vector<size_t>> downs(n);
      for (uint32_t l = n; l-- > 0;) {
        const size_t b = add(Resource::compute, Kind::bwd, sc.profile.layers[l].bwd_time, k,
                             l, 0);
        link(prev_compute, b);
        prev_compute = b;
        const StageCost& c = sc.costs[l];
        const uint64_t slices = num_slices(c);
        for (uint64_t s = 0; s < slices; ++s) {
          const uint32_t si = static_cast<uint32_t>(s);
          const uint64_t over = sc.per_slice_overhead;
          const size_t up =
              add(Resource::uplink, Kind::up, chunk(c.up, slices, s) + over, k, l, si);
          const size_t upd =
              add(Resource::update, Kind::update, chunk(c.update, slices, s), k, l, si);
          const size_t down =
              add(Resource::downlink, Kind::down, chunk(c.down, slices, s) + over, k, l, si);
          link(b, up);
          link(up, upd);
          link(upd, down);
          downs[l].push_back(down);
        }
      }
      for (uint32_t l = 0; l < n; ++l) {
        const size_t f =
            add(Resource::compute, Kind::fwd, sc.profile.layers[l].fwd_time, k + 1, l, 0);
        link(prev_compute, f);
        for (size_t d : downs[l]) link(d, f);
        prev_compute = f;
      }
    }
  }

  Timeline run() {
    const bool priority = sc_.policy == Policy::priority_sliced;
    auto before = [&](size_t a, size_t b) {
      const Task& x = tasks_[a];
      const Task& y = tasks_[b];
      if (priority) {
        if (x.iteration != y.iteration) return x.iteration < y.iteration;
        if (x.layer != y.layer) return x.layer < y.layer;
        if (x.slice != y.slice) return x.slice < y.slice;
      } else if (x.eligible_at != y.eligible_at) {
        return x.eligible_at < y.eligible_at;
      }
      return a < b;
    };

    std::vector<std::vector<size_t>> ready(kNumResources);
    std::vector<std::vector<size_t>> running(kNumResources);
    for (size_t i = 0; i < tasks_.size(); ++i)
      if (tasks_[i].waiting == 0) ready[res_id(tasks_[i].resource)].push_back(i);

    Timeline tl;
    size_t finished = 0;
    uint64_t t = 0;
    for (;;) {
      bool changed = true;
      while (changed) {
        changed = false;
        for (int r = 0; r < kNumResources; ++r) {
          auto& run = running[r];
          for (size_t j = 0; j < run.size();) {
            Task& task = tasks_[run[j]];
            if (task.start + task.duration != t) {
              ++j;
              continue;
            }
            task.done = true;
            ++finished;
            tl.makespan = std::max(tl.makespan, t);
            for (size_t s : task.successors) {
              if (--tasks_[s].waiting == 0) {
                tasks_[s].eligible_at = t;
                ready[res_id(tasks_[s].resource)].push_back(s);
              }
            }
            run.erase(run.begin() + static_cast<std::ptrdiff_t>(j));
            changed = true;
          }
        }
        for (int r = 0; r < kNumResources; ++r) {
          auto& q = ready[r];
          while (!q.empty() && (running[r].empty() || !serial(r))) {
            auto best = std::min_element(q.begin(), q.end(), before);
            const size_t id = *best;
            q.erase(best);
            Task& task = tasks_[id];
            task.start = t;
            running[r].push_back(id);
            if (task.duration > 0 || task.resource == Resource::compute)
              tl.entries.push_back({task.resource, item_name(task), t, t + task.duration,
                                    task.iteration, task.layer, task.slice, task.kind});
            changed = true;
          }
        }
      }
      uint64_t next = std::numeric_limits<uint64_t>::max();
      for (const auto& run : running)
        for (size_t id : run) next = std::min(next, tasks_[id].start + tasks_[id].duration);
      if (next == std::numeric_limits<uint64_t>::max()) break;
      t = next;
    }
    if (finished != tasks_.size())
      throw std::logic_error("simulation stalled with unfinished tasks");

    std::stable_sort(tl.entries.begin(), tl.entries.end(),
                     [](const Entry& a, const Entry& b) {
                       if (a.start != b.start) return a.start < b.start;
                       return a.resource < b.resource;
                     });
    return tl;
  }

 private:
  static constexpr size_t kNone = std::numeric_limits<size_t>::max();

  static int res_id(Resource r) { return static_cast<int>(r); }

  bool serial(int r) const {
    return r != res_id(Resource::update) || sc_.serial_update;
  }

  uint64_t num_slices(const StageCost& c) const {
    if (sc_.policy == Policy::aggressive_coarse) return 1;
    const uint64_t longest = std::max({c.up, c.update, c.down});
    return std::max<uint64_t>(1, (longest + sc_.slice_ticks - 1) / sc_.slice_ticks);
  }

  size_t add(Resource r, Kind kind, uint64_t duration, uint32_t iteration, uint32_t layer,
             uint32_t slice) {
    tasks_.push_back({r, kind, duration, iteration, layer, slice, {}, 0, 0, 0, false});
    return tasks_.size() - 1;
  }

  void link(size_t from, size_t to) {
    if (from == kNone) return;
    tasks_[from].successors.push_back(to);
    ++tasks_[to].waiting;
  }

  const Scenario& sc_;
  std::vector<Task> tasks_;
};

}  // namespace

std::string_view to_string(Resource r) {
  switch (r) {
    case Resource::compute: return "compute";
    case Resource::uplink: return "uplink";
    case Resource::update: return "update";
    case Resource::downlink: return "downlink";
  }
  return "?";
}

std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::aggressive_coarse: return "aggressive-coarse";
    case Policy::aggressive_sliced: return "aggressive-sliced";
    case Policy::priority_sliced: return "priority-sliced";
  }
  return "?";
}

Policy parse_policy(std::string_view text) {
  for (Policy p : {Policy::aggressive_coarse, Policy::aggressive_sliced,
                   Policy::priority_sliced})
    if (to_string(p) == text) return p;
  throw std::invalid_argument("unknown policy '" + std::string(text) + "'");
}

void validate(const Scenario& sc) {
  validate(sc.profile);
  if (sc.costs.size() != sc.profile.layers.size())
    throw std::invalid_argument("scenario has " + std::to_string(sc.costs.size()) +
                                " stage costs for " +
                                std::to_string(sc.profile.layers.size()) + " layers");
  if (sc.slice_ticks == 0) throw std::invalid_argument("slice_ticks must be >= 1");
  if (sc.num_iterations == 0) throw std::invalid_argument("num_iterations must be >= 1");
}

Scenario scenario_from_json(const nlohmann::json& doc) {
  Scenario sc;
  try {
    sc.profile = profile_from_json(doc.at("profile"));
    for (const auto& c : doc.at("costs"))
      sc.costs.push_back({c.at("up").get<uint64_t>(), c.at("update").get<uint64_t>(),
                          c.at("down").get<uint64_t>()});
    sc.policy = parse_policy(doc.value("policy", std::string("priority-sliced")));
    sc.slice_ticks = doc.value("slice_ticks", uint64_t{1});
    sc.num_iterations = doc.value("num_iterations", uint32_t{1});
    sc.per_slice_overhead = doc.value("per_slice_overhead", uint64_t{0});
    sc.serial_update = doc.value("serial_update", false);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("bad scenario: ") + e.what());
  }
  validate(sc);
  return sc;
}

nlohmann::json scenario_to_json(const Scenario& sc) {
  nlohmann::json costs = nlohmann::json::array();
  for (const StageCost& c : sc.costs)
    costs.push_back({{"up", c.up}, {"update", c.update}, {"down", c.down}});
  return {{"profile", profile_to_json(sc.profile)},
          {"costs", costs},
          {"policy", std::string(to_string(sc.policy))},
          {"slice_ticks", sc.slice_ticks},
          {"num_iterations", sc.num_iterations},
          {"per_slice_overhead", sc.per_slice_overhead},
          {"serial_update", sc.serial_update}};
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open scenario " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return scenario_from_json(doc);
}

Timeline simulate(const Scenario& scenario) {
  validate(scenario);
  return Graph(scenario).run();
}

uint64_t inter_iteration_delay(const Timeline& timeline, uint32_t iteration) {
  const Entry* bwd = nullptr;
  const Entry* fwd = nullptr;
  for (const Entry& e : timeline.entries) {
    if (e.layer != 0) continue;
    if (e.kind == Kind::bwd && e.iteration == iteration) bwd = &e;
    if (e.kind == Kind::fwd && e.iteration == iteration + 1) fwd = &e;
  }
  if (bwd == nullptr || fwd == nullptr)
    throw std::invalid_argument("timeline lacks the events of iteration " +
                                std::to_string(iteration) + " and its next forward");
  return fwd->start - bwd->end;
}

std::vector<std::pair<uint64_t, uint64_t>> busy_intervals(const Timeline& timeline,
                                                          Resource resource) {
  std::vector<std::pair<uint64_t, uint64_t>> out;
  for (const Entry& e : timeline.entries) {
    if (e.resource != resource || e.end == e.start) continue;
    if (!out.empty() && out.back().second >= e.start)
      out.back().second = std::max(out.back().second, e.end);
    else
      out.emplace_back(e.start, e.end);
  }
  return out;
}

double link_utilization(const Timeline& timeline, Resource resource) {
  const auto busy = busy_intervals(timeline, resource);
  if (busy.empty()) return 0.0;
  uint64_t total = 0;
  for (const auto& [s, e] : busy) total += e - s;
  const uint64_t span = timeline.makespan - busy.front().first;
  return span == 0 ? 0.0 : static_cast<double>(total) / static_cast<double>(span);
}

namespace {

Scenario with_slice(const Scenario& sc, uint64_t size) {
  Scenario s = sc;
  s.slice_ticks = size;
  return s;
}

}  // namespace

std::vector<SweepPoint> sweep_slice_size(const Scenario& scenario,
                                         std::span<const uint64_t> sizes) {
  std::vector<SweepPoint> out(sizes.size());
  const long n = static_cast<long>(sizes.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    out[i] = {sizes[i], simulate(with_slice(scenario, sizes[i])).makespan};
  }
  return out;
}

namespace reference {

std::vector<SweepPoint> sweep_slice_size(const Scenario& scenario,
                                         std::span<const uint64_t> sizes) {
  std::vector<SweepPoint> out;
  out.reserve(sizes.size());
  for (uint64_t s : sizes) out.push_back({s, simulate(with_slice(scenario, s)).makespan});
  return out;
}

}  // namespace reference

void write_timeline_csv(std::ostream& out, const Timeline& timeline) {
  out << "resource,item,start,end\n";
  for (const Entry& e : timeline.entries)
    out << to_string(e.resource) << ',' << e.item << ',' << e.start << ',' << e.end << '\n';
}

std::string summary_line(const Timeline& timeline) {
  std::ostringstream os;
  os << "makespan=" << timeline.makespan << " delay=";
  try {
    os << inter_iteration_delay(timeline);
  } catch (const std::invalid_argument&) {
    os << "NA";
  }
  char util[96];
  std::snprintf(util, sizeof util, " uplink_util=%.4f downlink_util=%.4f",
                link_utilization(timeline, Resource::uplink),
                link_utilization(timeline, Resource::downlink));
  os << util;
  return os.str();
}

}  // namespace p3::sim
