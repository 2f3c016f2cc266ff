#pragma once

#include <cstddef>
#include <functional>

namespace sepp {

// Upper bound on worker threads used by batch evaluations (default 1).
void set_thread_count(int n);
int thread_count();

// Calls body(i) for i in [0, n). Each index is handled by exactly one thread
// and bodies write only to their own slot, so results do not depend on the
// thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace sepp
