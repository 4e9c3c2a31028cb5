#pragma once

namespace livekt {

// Worker count for parallel loops: hardware concurrency capped by the
// LIVEKT_THREADS environment variable (read once). Always >= 1.
int thread_count();

// Test hook; pass 0 to restore the environment-derived default.
void set_thread_count(int n);

}  // namespace livekt
