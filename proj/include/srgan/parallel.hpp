#pragma once

#include <cstdint>
#include <functional>

namespace srgan {

// Upper bound on worker threads used inside ops. Work is always split by
// sample and reduced in index order, so results do not depend on this value.
void set_num_threads(int n);
int num_threads();

// Reads SRGAN_BENCH_THREADS when set; returns the applied thread count.
int configure_threads_from_env();
// Applies `requested`, capped by SRGAN_BENCH_THREADS when set.
int apply_thread_request(int requested);

void parallel_for(std::int64_t n, const std::function<void(std::int64_t)>& fn);

}  // namespace srgan
