#pragma once

#include <functional>

namespace mfg {

// Worker count used by per-particle loops. Defaults to 1; results are only
// guaranteed bit-reproducible at 1.
void set_thread_count(int threads);
int thread_count();

// Calls fn(begin, end) on contiguous chunks of [0, n). Chunks never overlap, so
// fn may write to per-index outputs without synchronization.
void parallel_for(int n, const std::function<void(int, int)>& fn);

// Stops glibc from handing large freed blocks back to the OS. The training
// loops free and reallocate the same big temporaries every step, and without
// this most of the run time goes to page faults. No-op elsewhere.
void keep_heap_resident();

}  // namespace mfg
