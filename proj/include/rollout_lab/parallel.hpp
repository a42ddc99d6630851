#ifndef ROLLOUT_LAB_PARALLEL_HPP
#define ROLLOUT_LAB_PARALLEL_HPP

#include <algorithm>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace rollout_lab {

/// Worker budget: hardware concurrency, capped by ROLLOUT_LAB_THREADS when set.
inline unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("ROLLOUT_LAB_THREADS")) {
    try {
      const long cap = std::stol(env);
      if (cap >= 1) n = std::min<unsigned>(n, static_cast<unsigned>(cap));
    } catch (...) {
      // unparsable values leave the default in place
    }
  }
  return n;
}

/// Splits [0, count) into contiguous chunks and runs fn(worker, begin, end) on
/// each. Runs inline when one worker suffices.
template <typename Fn>
void parallel_chunks(long count, unsigned workers, Fn&& fn) {
  workers = static_cast<unsigned>(std::clamp<long>(std::min<long>(workers, count), 1, count > 0 ? count : 1));
  if (workers <= 1) {
    fn(0u, 0L, count);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers);
  const long step = (count + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const long lo = static_cast<long>(w) * step;
    const long hi = std::min(count, lo + step);
    if (lo >= hi) break;
    pool.emplace_back([&fn, w, lo, hi] { fn(w, lo, hi); });
  }
}

}  // namespace rollout_lab

#endif  // ROLLOUT_LAB_PARALLEL_HPP
