#pragma once

#include <cstddef>
#include <exception>
#include <functional>

namespace tomcoord {

// Worker count used by parallel_for; 1 means run inline on the caller.
void set_thread_count(int n);
int thread_count();

// Runs body(i) for i in [0, n). Each index must write only its own output
// slot, so results never depend on the schedule. The first exception thrown
// by any body is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace tomcoord
