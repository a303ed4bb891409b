#pragma once

#include <algorithm>
#include <cstddef>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace squeezelab::detail
{
// Runs fn(i) for i in [0, n) over a fixed pool of threads. Each index is
// visited exactly once, so writes to per-index slots need no locking. The
// first exception thrown by any worker is rethrown on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn &&fn)
{
    if (threads == 0)
    {
        threads = std::max(1u, std::thread::hardware_concurrency());
    }
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
    if (threads <= 1)
    {
        for (std::size_t i = 0; i < n; ++i)
        {
            fn(i);
        }
        return;
    }
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (unsigned w = 0; w < threads; ++w)
        {
            pool.emplace_back([&, w] {
                try
                {
                    for (std::size_t i = w; i < n; i += threads)
                    {
                        fn(i);
                    }
                }
                catch (...)
                {
                    std::lock_guard lock(failure_mutex);
                    if (!failure)
                    {
                        failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure)
    {
        std::rethrow_exception(failure);
    }
}

} // namespace squeezelab::detail
