#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace qbsde {

/// Effective worker count: explicit request > QBSDE_THREADS > hardware.
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("QBSDE_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return v;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Fixed block size shared by every parallel loop. Work is partitioned by
/// block index, never by thread count, which is what keeps results
/// byte-identical under any --threads value.
inline constexpr std::size_t kBlock = 4096;

/// Runs fn(begin, end) over [0, total) in kBlock-sized chunks. Each chunk
/// must write only to its own output slots; chunks are claimed atomically so
/// the thread-to-chunk assignment is irrelevant to the result.
inline void parallel_for_blocks(std::size_t total, int threads,
                                const std::function<void(std::size_t, std::size_t)>& fn) {
    if (total == 0) return;
    const std::size_t nblocks = (total + kBlock - 1) / kBlock;
    const int workers = std::max(1, std::min<int>(threads, static_cast<int>(nblocks)));
    if (workers == 1) {
        for (std::size_t b = 0; b < nblocks; ++b)
            fn(b * kBlock, std::min(total, (b + 1) * kBlock));
        return;
    }
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (;;) {
            const std::size_t b = next.fetch_add(1);
            if (b >= nblocks) return;
            fn(b * kBlock, std::min(total, (b + 1) * kBlock));
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers - 1);
    for (int w = 1; w < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
}

struct MeanVar {
    double mean = 0.0;
    double se = 0.0;       // standard error of the mean
    double var = 0.0;      // unbiased sample variance
    std::size_t count = 0;
};

/// Deterministic mean/variance over eval(i), i in [0, total). Partial sums
/// are accumulated per fixed-size block and folded in block order, so the
/// floating-point result does not depend on the thread count.
inline MeanVar block_mean_var(std::size_t total, int threads,
                              const std::function<double(std::size_t)>& eval) {
    if (total == 0) return {};
    const std::size_t nblocks = (total + kBlock - 1) / kBlock;
    std::vector<double> s1(nblocks, 0.0), s2(nblocks, 0.0);
    parallel_for_blocks(total, threads, [&](std::size_t b0, std::size_t b1) {
        const std::size_t b = b0 / kBlock;
        double a = 0.0, q = 0.0;
        for (std::size_t i = b0; i < b1; ++i) {
            const double v = eval(i);
            a += v;
            q += v * v;
        }
        s1[b] = a;
        s2[b] = q;
    });
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t b = 0; b < nblocks; ++b) {
        sum += s1[b];
        sumsq += s2[b];
    }
    MeanVar r;
    r.count = total;
    r.mean = sum / static_cast<double>(total);
    if (total > 1) {
        const double n = static_cast<double>(total);
        r.var = std::max(0.0, (sumsq - n * r.mean * r.mean) / (n - 1.0));
        r.se = std::sqrt(r.var / n);
    }
    return r;
}

} // namespace qbsde
