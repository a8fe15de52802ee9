#pragma once

namespace dcsysid::parallel {

/// Worker count for the OpenMP kernels. Read from DCSYSID_THREADS on first
/// use; defaults to 1. Values < 1 or unparsable fall back to 1.
int thread_count();

/// Overrides the worker count for the rest of the process (tests, bench).
void set_thread_count(int threads);

}  // namespace dcsysid::parallel
