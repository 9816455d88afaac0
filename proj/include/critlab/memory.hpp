// Copyright 2026 The critlab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace critlab {

struct MemoryStats {
  std::size_t peak_elements = 0;
  std::size_t peak_bytes = 0;
};

/// Counts live elements and bytes of the buffers registered with it and
/// remembers the high-water mark. Not thread-safe; one tracker per call.
class MemoryTracker {
 public:
  void acquire(std::size_t elements, std::size_t bytes) {
    live_elements_ += elements;
    live_bytes_ += bytes;
    stats_.peak_elements = std::max(stats_.peak_elements, live_elements_);
    stats_.peak_bytes = std::max(stats_.peak_bytes, live_bytes_);
  }
  void release(std::size_t elements, std::size_t bytes) {
    live_elements_ -= elements;
    live_bytes_ -= bytes;
  }
  const MemoryStats& stats() const { return stats_; }

 private:
  std::size_t live_elements_ = 0;
  std::size_t live_bytes_ = 0;
  MemoryStats stats_;
};

/// std::vector whose size is charged to a MemoryTracker for its lifetime.
template <typename T>
class TrackedBuffer {
 public:
  TrackedBuffer(MemoryTracker& tracker, std::size_t n, T fill = T{})
      : tracker_(&tracker), data_(n, fill) {
    tracker_->acquire(n, n * sizeof(T));
  }
  TrackedBuffer(const TrackedBuffer&) = delete;
  TrackedBuffer& operator=(const TrackedBuffer&) = delete;
  TrackedBuffer(TrackedBuffer&& other) noexcept
      : tracker_(std::exchange(other.tracker_, nullptr)),
        data_(std::move(other.data_)) {}
  ~TrackedBuffer() {
    if (tracker_) tracker_->release(data_.size(), data_.size() * sizeof(T));
  }

  /// Hands the storage to the caller; the tracker keeps its peak.
  std::vector<T> take() && {
    if (tracker_) tracker_->release(data_.size(), data_.size() * sizeof(T));
    tracker_ = nullptr;
    return std::move(data_);
  }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::size_t size() const { return data_.size(); }

 private:
  MemoryTracker* tracker_;
  std::vector<T> data_;
};

}  // namespace critlab
