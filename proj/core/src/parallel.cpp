#include "slowfast/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace slowfast {

std::size_t default_workers() {
    if (const char* env = std::getenv("SLOWFAST_WORKERS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
            // fall through to the hardware default
        }
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n_tasks, std::size_t workers,
                  const std::function<void(std::size_t)>& task) {
    if (n_tasks == 0) return;
    workers = std::clamp<std::size_t>(workers, 1, n_tasks);
    if (workers == 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) task(i);
        return;
    }
    // Tasks above the lowest failing index are skipped; the lowest failure is
    // rethrown, so the reported error does not depend on scheduling.
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> lowest_failure{n_tasks};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto run = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n_tasks) return;
            if (i > lowest_failure.load()) continue;
            try {
                task(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (i < lowest_failure.load()) {
                    lowest_failure = i;
                    error = std::current_exception();
                }
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        pool.reserve(workers - 1);
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(run);
        run();
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace slowfast
