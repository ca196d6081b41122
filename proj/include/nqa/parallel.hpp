// Copyright 2026 The NQA Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef NQA_PARALLEL_HPP
#define NQA_PARALLEL_HPP

#include <cstddef>
#include <functional>

namespace nqa {

// Worker count: `requested` if positive, else NQA_THREADS, else the hardware
// concurrency (at least 1).
int resolve_threads(int requested = 0);

// Calls f(i) for i in [0, n) over up to `threads` workers. Work is split into
// contiguous chunks, so results written per index are deterministic. The first
// exception thrown by any worker is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& f, int threads = 0);

}  // namespace nqa

#endif  // NQA_PARALLEL_HPP
