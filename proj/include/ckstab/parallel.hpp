#pragma once

#include <cstddef>
#include <functional>

namespace ckstab {

// Worker count from CKPT_STAB_THREADS (0 or unset = hardware concurrency).
std::size_t ThreadBudget();

// Runs fn(i) for i in [0, n). Each index must write only its own output
// slot; results are therefore independent of the thread count. The first
// exception thrown by any worker is rethrown on the calling thread.
void ParallelFor(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace ckstab
