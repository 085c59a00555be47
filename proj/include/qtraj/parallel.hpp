/* Copyright 2026 The qtraj Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef QTRAJ_PARALLEL_HPP
#define QTRAJ_PARALLEL_HPP

#include <algorithm>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace qtraj {

inline unsigned resolve_workers(unsigned requested) {
  if (requested > 0) {
    return requested;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Splits [0, n) into `workers` contiguous ranges and calls fn(worker, begin,
/// end) on each, one thread per range. The first exception is rethrown.
template <typename Fn>
void parallel_ranges(std::size_t n, unsigned workers, Fn&& fn) {
  const unsigned count =
      static_cast<unsigned>(std::min<std::size_t>(resolve_workers(workers),
                                                  std::max<std::size_t>(n, 1)));
  if (count <= 1) {
    fn(0u, std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> threads;
  std::vector<std::exception_ptr> errors(count);
  threads.reserve(count);
  for (unsigned w = 0; w < count; ++w) {
    const std::size_t begin = n * w / count;
    const std::size_t end = n * (w + 1) / count;
    threads.emplace_back([&, w, begin, end] {
      try {
        fn(w, begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) {
    t.join();
  }
  for (auto& e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
}

} // namespace qtraj

#endif
