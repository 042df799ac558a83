#pragma once

#include <atomic>
#include <exception>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace stbp {

/// Runs body(i) for i in [0, n) across hardware threads. Work items must
/// write to disjoint state; results are deterministic because the index
/// assignment carries no data dependence.
inline void parallel_for(int n, const std::function<void(int)>& body, int max_threads = 0) {
  if (n <= 0) return;
  int hw = max_threads > 0 ? max_threads : static_cast<int>(std::thread::hardware_concurrency());
  if (hw <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  hw = std::min(hw, n);
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int w = 0; w < hw; ++w)
    workers.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : workers) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace stbp
