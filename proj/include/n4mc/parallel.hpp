// Copyright 2026 the n4mc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace n4mc {

namespace detail {
inline thread_local bool in_parallel_region = false;
}

// Persistent worker pool behind parallel_for. Every task writes only to
// indices it owns, so results never depend on the worker count.
class ThreadPool {
public:
    static ThreadPool& instance() {
        static ThreadPool pool;
        return pool;
    }

    // 0 = hardware concurrency. May only be called between parallel regions.
    void set_threads(int n) {
        if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
        if (n < 1) n = 1;
        if (n == threads_wanted_) return;
        shutdown();
        threads_wanted_ = n;
        start();
    }

    int threads() const { return threads_wanted_; }

    // fn(begin, end) over [0, n) split into contiguous chunks.
    void run(int64_t n, const std::function<void(int64_t, int64_t)>& fn) {
        if (n <= 0) return;
        // Nested calls degrade to serial; chunk ownership stays unique.
        if (threads_wanted_ <= 1 || n == 1 || detail::in_parallel_region) {
            detail::in_parallel_region = true;
            fn(0, n);
            detail::in_parallel_region = false;
            return;
        }
        int chunks = threads_wanted_ < n ? threads_wanted_ : static_cast<int>(n);
        int64_t per = (n + chunks - 1) / chunks;
        int actual = static_cast<int>((n + per - 1) / per);
        {
            std::unique_lock<std::mutex> lock(mu_);
            job_fn_ = &fn;
            job_n_ = n;
            job_per_ = per;
            job_next_ = 0;
            job_pending_ = actual;
            ++job_id_;
        }
        cv_work_.notify_all();
        detail::in_parallel_region = true;
        work_loop_once();
        detail::in_parallel_region = false;
        std::unique_lock<std::mutex> lock(mu_);
        cv_done_.wait(lock, [this] { return job_pending_ == 0; });
        job_fn_ = nullptr;
    }

    ~ThreadPool() { shutdown(); }

private:
    ThreadPool() {
        threads_wanted_ = static_cast<int>(std::thread::hardware_concurrency());
        if (threads_wanted_ < 1) threads_wanted_ = 1;
        start();
    }

    void start() {
        stop_ = false;
        for (int i = 0; i < threads_wanted_ - 1; ++i) {
            workers_.emplace_back([this] { worker_main(); });
        }
    }

    void shutdown() {
        {
            std::unique_lock<std::mutex> lock(mu_);
            stop_ = true;
        }
        cv_work_.notify_all();
        for (auto& t : workers_) t.join();
        workers_.clear();
    }

    void worker_main() {
        detail::in_parallel_region = true;
        uint64_t seen = 0;
        for (;;) {
            {
                std::unique_lock<std::mutex> lock(mu_);
                cv_work_.wait(lock, [&] { return stop_ || (job_fn_ && job_id_ != seen); });
                if (stop_) return;
                seen = job_id_;
            }
            work_loop_once();
        }
    }

    void work_loop_once() {
        for (;;) {
            int64_t begin;
            const std::function<void(int64_t, int64_t)>* fn;
            {
                std::unique_lock<std::mutex> lock(mu_);
                if (!job_fn_ || job_next_ >= job_n_) return;
                begin = job_next_;
                job_next_ += job_per_;
                fn = job_fn_;
            }
            int64_t end = begin + job_per_;
            if (end > job_n_) end = job_n_;
            (*fn)(begin, end);
            {
                std::unique_lock<std::mutex> lock(mu_);
                if (--job_pending_ == 0) cv_done_.notify_all();
            }
        }
    }

    std::vector<std::thread> workers_;
    std::mutex mu_;
    std::condition_variable cv_work_, cv_done_;
    const std::function<void(int64_t, int64_t)>* job_fn_ = nullptr;
    int64_t job_n_ = 0, job_per_ = 0, job_next_ = 0;
    int job_pending_ = 0;
    uint64_t job_id_ = 0;
    int threads_wanted_ = 1;
    bool stop_ = false;
};

inline void set_thread_count(int n) { ThreadPool::instance().set_threads(n); }
inline int thread_count() { return ThreadPool::instance().threads(); }

template <class Fn>
void parallel_for(int64_t n, Fn&& fn) {
    std::function<void(int64_t, int64_t)> wrapped = [&fn](int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) fn(i);
    };
    ThreadPool::instance().run(n, wrapped);
}

// Range flavor for loops that amortize per-chunk setup.
template <class Fn>
void parallel_for_chunks(int64_t n, Fn&& fn) {
    std::function<void(int64_t, int64_t)> wrapped = [&fn](int64_t b, int64_t e) { fn(b, e); };
    ThreadPool::instance().run(n, wrapped);
}

}  // namespace n4mc
