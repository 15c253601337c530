#pragma once

#include <functional>

namespace fedlab {

// Process-wide worker budget, set once at run start (CLI --threads or
// FEDLAB_THREADS). Defaults to 1.
//
// parallel_for only changes *when* a task runs, never what it computes:
// tasks must write to disjoint index-addressed slots, and any reduction over
// those slots happens afterwards in index order. That is what makes results
// independent of the thread count.
void set_max_threads(int n);
int max_threads();

void parallel_for(int count, const std::function<void(int)>& fn);

}  // namespace fedlab
