// Copyright 2026 The CAWN Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Allocator-level byte counters for tensor storage. Used by the benchmark
// harness as a peak-activation proxy; they do not influence any computation.

#pragma once

#include <atomic>
#include <cstddef>
#include <new>

namespace cawn {

namespace memory_stats {

std::size_t current_bytes();
std::size_t peak_bytes();
/// Restart peak tracking from the current live size.
void reset_peak();

/// Keep large freed blocks in the heap instead of returning them to the OS.
/// Activations are allocated and released every step, and the default
/// mmap path spends a large share of training time zeroing fresh pages.
void retain_freed_blocks();

namespace detail {
void on_alloc(std::size_t bytes);
void on_free(std::size_t bytes);
} // namespace detail

} // namespace memory_stats

template <class T> struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <class U> TrackingAllocator(const TrackingAllocator<U> &) noexcept {}

  T *allocate(std::size_t n) {
    memory_stats::detail::on_alloc(n * sizeof(T));
    return static_cast<T *>(::operator new(n * sizeof(T)));
  }
  void deallocate(T *p, std::size_t n) noexcept {
    memory_stats::detail::on_free(n * sizeof(T));
    ::operator delete(p);
  }

  template <class U> bool operator==(const TrackingAllocator<U> &) const noexcept {
    return true;
  }
};

} // namespace cawn
