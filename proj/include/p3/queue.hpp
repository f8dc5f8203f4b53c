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

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <vector>

namespace p3 {

/// Ordering that treats every element as equal; the queue then degrades to
/// FIFO through its insertion sequence numbers.
struct FifoOrder {
  template <typename T>
  bool operator()(const T&, const T&) const {
    return false;
  }
};

/// Multi-producer queue that always hands out the element that comes first
/// under `Before` (insertion order among equals). pop() blocks until an
/// element is available or the queue is closed and drained.
template <typename T, typename Before>
class BlockingPriorityQueue {
 public:
  explicit BlockingPriorityQueue(Before before = Before{}) : before_(before) {}

  BlockingPriorityQueue(const BlockingPriorityQueue&) = delete;
  BlockingPriorityQueue& operator=(const BlockingPriorityQueue&) = delete;

  void push(T value) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      push_locked(std::move(value));
    }
    cv_.notify_one();
  }

  /// Inserts every element under one lock acquisition: a consumer sees either
  /// none or all of them.
  template <typename Range>
  void push_all(Range&& values) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (auto&& v : values) push_locked(std::forward<decltype(v)>(v));
    }
    cv_.notify_all();
  }

  std::optional<T> pop() {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return !heap_.empty() || closed_; });
    return pop_locked();
  }

  template <typename Clock, typename Duration>
  std::optional<T> pop_until(std::chrono::time_point<Clock, Duration> deadline) {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait_until(lock, deadline, [&] { return !heap_.empty() || closed_; });
    return pop_locked();
  }

  /// pop() that also calls `inspect(popped, next, remaining)` under the
  /// queue lock, where `next` points at the element now at the front (or is
  /// null) and `remaining` is the number of elements left.
  template <typename Inspect>
  std::optional<T> pop_inspect(Inspect&& inspect) {
    std::unique_lock<std::mutex> lock(mu_);
    cv_.wait(lock, [&] { return !heap_.empty() || closed_; });
    auto v = pop_locked();
    if (v) inspect(*v, heap_.empty() ? nullptr : &heap_.front().value, heap_.size());
    return v;
  }

  std::optional<T> try_pop() {
    std::lock_guard<std::mutex> lock(mu_);
    return pop_locked();
  }

  /// Wakes all consumers; pop() returns nullopt once the queue is empty.
  void close() {
    {
      std::lock_guard<std::mutex> lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard<std::mutex> lock(mu_);
    return closed_;
  }

  std::size_t size() const {
    std::lock_guard<std::mutex> lock(mu_);
    return heap_.size();
  }

  /// Copy of the queued elements in unspecified order (tests/diagnostics).
  std::vector<T> snapshot() const {
    std::lock_guard<std::mutex> lock(mu_);
    std::vector<T> out;
    out.reserve(heap_.size());
    for (const Entry& e : heap_) out.push_back(e.value);
    return out;
  }

 private:
  struct Entry {
    T value;
    uint64_t seq;
  };

  // Heap comparator: "a is served after b".
  bool after(const Entry& a, const Entry& b) const {
    if (before_(b.value, a.value)) return true;
    if (before_(a.value, b.value)) return false;
    return a.seq > b.seq;
  }

  void push_locked(T value) {
    heap_.push_back(Entry{std::move(value), next_seq_++});
    std::push_heap(heap_.begin(), heap_.end(),
                   [this](const Entry& a, const Entry& b) { return after(a, b); });
  }

  std::optional<T> pop_locked() {
    if (heap_.empty()) return std::nullopt;
    std::pop_heap(heap_.begin(), heap_.end(),
                  [this](const Entry& a, const Entry& b) { return after(a, b); });
    T value = std::move(heap_.back().value);
    heap_.pop_back();
    return value;
  }

  Before before_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::vector<Entry> heap_;
  uint64_t next_seq_ = 0;
  bool closed_ = false;
};

}  // namespace p3
