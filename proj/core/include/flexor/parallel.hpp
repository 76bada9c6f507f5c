#pragma once

#include <cstddef>
#include <functional>
#include <thread>

namespace flexor {

// Resolves a requested thread count: 0 (or negative) means "all hardware
// threads".
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Runs fn(i) for i in [0, n). Work items must write results into
// preallocated per-index slots so the outcome is independent of scheduling.
// If any item throws, the exception from the lowest index is rethrown after
// all workers have stopped.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t)>& fn);

}  // namespace flexor
