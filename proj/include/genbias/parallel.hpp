/*
 * Copyright 2026 The genbias Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace genbias {

namespace detail {
inline std::atomic<unsigned>& thread_setting() {
  static std::atomic<unsigned> threads{0};
  return threads;
}

// Set inside worker threads so nested parallel calls run inline.
inline bool& in_worker() {
  thread_local bool flag = false;
  return flag;
}
}  // namespace detail

// 0 means "use hardware concurrency".
inline void set_default_threads(unsigned n) { detail::thread_setting() = n; }

inline unsigned default_threads() {
  if (detail::in_worker()) return 1;
  const unsigned n = detail::thread_setting();
  if (n != 0) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

// Splits [0, n) into at most `threads` contiguous chunks and runs
// fn(begin, end, chunk) on each. Chunk boundaries depend only on n and the
// chunk count, so callers that reduce per-chunk results in chunk order get
// identical answers for any thread count as long as the reduction itself
// is order-insensitive or ordered by chunk.
template <class Fn>
void parallel_chunks(std::size_t n, Fn&& fn, unsigned threads = default_threads()) {
  const std::size_t chunks =
      std::max<std::size_t>(1, std::min<std::size_t>(threads, n));
  if (chunks == 1) {
    fn(std::size_t{0}, n, std::size_t{0});
    return;
  }
  std::vector<std::exception_ptr> errors(chunks);
  std::vector<std::thread> workers;
  workers.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t begin = n * c / chunks;
    const std::size_t end = n * (c + 1) / chunks;
    workers.emplace_back([&, begin, end, c] {
      detail::in_worker() = true;
      try {
        fn(begin, end, c);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

template <class Fn>
void parallel_for(std::size_t n, Fn&& fn, unsigned threads = default_threads()) {
  parallel_chunks(
      n,
      [&](std::size_t begin, std::size_t end, std::size_t) {
        for (std::size_t i = begin; i < end; ++i) fn(i);
      },
      threads);
}

}  // namespace genbias
