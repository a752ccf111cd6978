// Copyright Contributors to the dpgs Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace dpgs {

// Global worker-count knob set once by the CLI (0 = hardware concurrency).
void set_thread_count(int n);
int thread_count();

// Static block partition over [begin, end). Each index is processed exactly
// once; results must be written to disjoint locations so the schedule cannot
// affect output.
void parallel_for(int64_t begin, int64_t end, const std::function<void(int64_t)>& body);

} // namespace dpgs
