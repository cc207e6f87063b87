#pragma once

#include <functional>

namespace featloc {

/// Worker count: FEATLOC_THREADS if set and positive, else hardware concurrency.
int thread_count();

/// Runs body(i) for i in [0, n). Iterations are split into contiguous blocks,
/// one per worker, so any per-index result is independent of the schedule.
void parallel_for(int n, const std::function<void(int)>& body);

}  // namespace featloc
