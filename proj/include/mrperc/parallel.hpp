#ifndef MRPERC_PARALLEL_HPP
#define MRPERC_PARALLEL_HPP

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace mrperc {

// Trials are cut into fixed-size blocks independent of the thread count. Each
// block fills its own accumulator and the blocks are merged in index order, so
// the result is bit-identical for any number of threads.
inline constexpr std::uint64_t kTrialBlock = 512;

inline unsigned default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1u : hw;
}

// Runs body(begin, end) over [0, n) in blocks of `block`, on up to `threads`
// workers. Exceptions from workers are rethrown on the calling thread.
template <class Body>
void parallel_blocks(std::uint64_t n, std::uint64_t block, unsigned threads,
                     Body&& body) {
  if (n == 0) return;
  const std::uint64_t blocks = (n + block - 1) / block;
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(
                                                         std::min<std::uint64_t>(blocks, 1024))));
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::uint64_t b = next.fetch_add(1);
      if (b >= blocks) return;
      try {
        body(b, b * block, std::min(n, (b + 1) * block));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(blocks);
        return;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

// Acc must be default-constructible and provide merge(const Acc&).
// trial(index, acc) is called once per trial index in [0, trials).
template <class Acc, class Trial>
Acc run_trials(std::uint64_t trials, unsigned threads, Trial&& trial) {
  const std::uint64_t blocks = (trials + kTrialBlock - 1) / kTrialBlock;
  std::vector<Acc> partial(blocks);
  parallel_blocks(trials, kTrialBlock, threads,
                  [&](std::uint64_t b, std::uint64_t begin, std::uint64_t end) {
                    Acc& acc = partial[b];
                    for (std::uint64_t t = begin; t < end; ++t) trial(t, acc);
                  });
  Acc total;
  for (const Acc& acc : partial) total.merge(acc);
  return total;
}

}  // namespace mrperc

#endif  // MRPERC_PARALLEL_HPP
