#pragma once

// Wait-free single-producer single-consumer queues.
//
// SpscQueue is a bounded ring: push and pop each finish in a bounded number
// of steps and report Full/Empty instead of waiting. ChainedSpscQueue links
// rings so the producer never has to wait for the consumer: a full segment
// is followed by a freshly allocated one.
//
// With assertions enabled, each endpoint remembers the first thread that
// used it and asserts that no other thread does.

#include <atomic>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

namespace gpuprof::pipeline {

enum class PushResult { Accepted, Full };

inline constexpr std::size_t kDefaultQueueCapacity = 4096;

namespace detail {

class EndpointOwner {
 public:
  void check() {
#ifndef NDEBUG
    std::thread::id self = std::this_thread::get_id();
    std::thread::id expected{};
    if (!owner_.compare_exchange_strong(expected, self, std::memory_order_relaxed))
      assert(expected == self && "SPSC endpoint used by a second thread");
#endif
  }
  /// Hands the endpoint to whichever thread touches it next.
  void release() { owner_.store(std::thread::id{}, std::memory_order_relaxed); }

 private:
  std::atomic<std::thread::id> owner_{};
};

}  // namespace detail

template <typename T>
class SpscQueue {
 public:
  explicit SpscQueue(std::size_t capacity = kDefaultQueueCapacity)
      : slots_(capacity == 0 ? 1 : capacity) {}

  SpscQueue(const SpscQueue&) = delete;
  SpscQueue& operator=(const SpscQueue&) = delete;

  std::size_t capacity() const { return slots_.size(); }

  /// Producer only. `item` is moved from only when accepted.
  PushResult push(T&& item) { return emplace(std::move(item)); }
  PushResult push(const T& item) { return emplace(item); }

  /// Consumer only.
  std::optional<T> pop() {
    consumer_.check();
    const std::uint64_t head = head_.load(std::memory_order_relaxed);
    if (head == tail_cache_) {
      tail_cache_ = tail_.load(std::memory_order_acquire);
      if (head == tail_cache_) return std::nullopt;
    }
    std::optional<T> out(std::move(slots_[head % slots_.size()]));
    slots_[head % slots_.size()] = T{};
    head_.store(head + 1, std::memory_order_release);
    return out;
  }

  /// Approximate; exact when both endpoints are quiescent.
  std::size_t size() const {
    return tail_.load(std::memory_order_acquire) - head_.load(std::memory_order_acquire);
  }

  void release_producer() { producer_.release(); }
  void release_consumer() { consumer_.release(); }

 private:
  template <typename U>
  PushResult emplace(U&& item) {
    producer_.check();
    const std::uint64_t tail = tail_.load(std::memory_order_relaxed);
    if (tail - head_cache_ == slots_.size()) {
      head_cache_ = head_.load(std::memory_order_acquire);
      if (tail - head_cache_ == slots_.size()) return PushResult::Full;
    }
    slots_[tail % slots_.size()] = std::forward<U>(item);
    tail_.store(tail + 1, std::memory_order_release);
    return PushResult::Accepted;
  }

  std::vector<T> slots_;
  alignas(64) std::atomic<std::uint64_t> head_{0};
  std::uint64_t tail_cache_ = 0;  // consumer-private
  detail::EndpointOwner consumer_;
  alignas(64) std::atomic<std::uint64_t> tail_{0};
  std::uint64_t head_cache_ = 0;  // producer-private
  detail::EndpointOwner producer_;
};

/// Unbounded SPSC queue made of linked SpscQueue segments.
template <typename T>
class ChainedSpscQueue {
 public:
  explicit ChainedSpscQueue(std::size_t segment_capacity = kDefaultQueueCapacity)
      : capacity_(segment_capacity) {
    head_ = tail_ = new Segment(capacity_);
  }
  ~ChainedSpscQueue() {
    while (head_) {
      Segment* next = head_->next.load(std::memory_order_relaxed);
      delete head_;
      head_ = next;
    }
  }
  ChainedSpscQueue(const ChainedSpscQueue&) = delete;
  ChainedSpscQueue& operator=(const ChainedSpscQueue&) = delete;

  /// Producer only; always accepted.
  void push(T item) {
    producer_.check();
    if (tail_->queue.push(std::move(item)) == PushResult::Accepted) return;  // not moved when Full
    Segment* seg = new Segment(capacity_);
    [[maybe_unused]] PushResult r = seg->queue.push(std::move(item));
    assert(r == PushResult::Accepted);
    segments_.fetch_add(1, std::memory_order_relaxed);
    tail_->next.store(seg, std::memory_order_release);
    tail_ = seg;
  }

  /// Consumer only.
  std::optional<T> pop() {
    consumer_.check();
    for (;;) {
      if (auto v = head_->queue.pop()) return v;
      Segment* next = head_->next.load(std::memory_order_acquire);
      if (!next) return std::nullopt;
      // Everything pushed to head_ happened before `next` was published.
      if (auto v = head_->queue.pop()) return v;
      delete head_;
      head_ = next;
    }
  }

  /// Segments allocated beyond the first (observability for tests).
  std::size_t extra_segments() const { return segments_.load(std::memory_order_relaxed); }

 private:
  struct Segment {
    explicit Segment(std::size_t cap) : queue(cap) {}
    SpscQueue<T> queue;
    std::atomic<Segment*> next{nullptr};
  };
  std::size_t capacity_;
  alignas(64) Segment* head_;  // consumer-private
  detail::EndpointOwner consumer_;
  alignas(64) Segment* tail_;  // producer-private
  detail::EndpointOwner producer_;
  std::atomic<std::size_t> segments_{0};
};

/// A pair of queues between two threads: `forward` flows from side A to
/// side B, `backward` from B to A.
template <typename Fwd, typename Bwd>
struct BidirectionalChannel {
  explicit BidirectionalChannel(std::size_t capacity = kDefaultQueueCapacity)
      : forward(capacity), backward(capacity) {}
  ChainedSpscQueue<Fwd> forward;
  ChainedSpscQueue<Bwd> backward;
};

}  // namespace gpuprof::pipeline
