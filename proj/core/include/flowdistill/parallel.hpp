#pragma once

#include <cstddef>
#include <functional>

namespace flowdistill {

// Worker count: hardware concurrency capped by FLOWDISTILL_THREADS when set.
std::size_t thread_budget();

// Runs fn(i) for i in [0, n). Each index must write only its own output slot;
// results are then independent of scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace flowdistill
