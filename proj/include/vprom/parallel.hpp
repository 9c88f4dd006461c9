#pragma once

#include "vprom/common.hpp"

#include <functional>

namespace vprom {

/// Worker count used by parallel_for; 0 means hardware concurrency.
void set_thread_count(Index n);
Index thread_count();

/// Runs body(i) for i in [0, n). Tasks must write to disjoint outputs; results
/// are then independent of the thread count. If tasks throw, the exception of
/// the lowest index is rethrown after all workers stop.
void parallel_for(Index n, const std::function<void(Index)>& body);

}  // namespace vprom
