// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>

namespace csr {

// Process-wide worker count for parallel_for. n <= 0 resets to the hardware
// default. Never affects results, only wall time: work is split statically
// and each index is independent.
void set_num_threads(int n);
int num_threads();

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

} // namespace csr
