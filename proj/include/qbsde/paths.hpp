#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <stdexcept>
#include <vector>

#include "qbsde/io.hpp"
#include "qbsde/parallel.hpp"
#include "qbsde/rng.hpp"
#include "qbsde/time_grid.hpp"

namespace qbsde {

/// N Brownian paths on a shared time grid, stored path-major:
/// b[(p*(m+1) + i)*d + j] = B^j at time t_i of path p.
struct PathEnsemble {
    TimeGrid grid;
    int N = 0;
    int d = 1;
    std::uint64_t seed = 0;
    std::uint64_t stream = kStreamPrimary;
    std::vector<double> b;

    std::size_t idx(int p, int i, int j = 0) const {
        return (static_cast<std::size_t>(p) * (grid.m + 1) + i) * d + j;
    }
    double bval(int p, int i, int j = 0) const { return b[idx(p, i, j)]; }
};

/// Increment j of path p over [t_i, t_{i+1}); pure function of the key, so
/// any consumer can regenerate increments without storing them.
inline double bm_increment(const CounterRng& rng, double dt, int p, int i, int j) {
    return std::sqrt(dt) * rng.gaussian(p, i, j);
}

inline PathEnsemble simulate_bm(TimeGrid grid, int N, int d, std::uint64_t seed,
                                int threads = 0, std::uint64_t stream = kStreamPrimary) {
    grid.check();
    if (N < 1 || d < 1) throw std::invalid_argument("simulate_bm: N, d must be >= 1");
    PathEnsemble ens;
    ens.grid = grid;
    ens.N = N;
    ens.d = d;
    ens.seed = seed;
    ens.stream = stream;
    ens.b.resize(static_cast<std::size_t>(N) * (grid.m + 1) * d);

    const CounterRng rng(seed, stream);
    const double dt = grid.dt();
    const int m = grid.m;
    parallel_for_blocks(static_cast<std::size_t>(N), resolve_threads(threads),
                        [&](std::size_t p0, std::size_t p1) {
                            for (std::size_t p = p0; p < p1; ++p) {
                                const std::size_t base = p * (m + 1) * d;
                                for (int j = 0; j < d; ++j) ens.b[base + j] = 0.0;
                                for (int i = 0; i < m; ++i) {
                                    const std::size_t row = base + static_cast<std::size_t>(i) * d;
                                    for (int j = 0; j < d; ++j)
                                        ens.b[row + d + j] =
                                            ens.b[row + j] +
                                            bm_increment(rng, dt, static_cast<int>(p), i, j);
                                }
                            }
                        });
    return ens;
}

/// A candidate solution (Y, Z) riding on an ensemble, plus its drift g.
/// y: N*(m+1) (n = 1), z: N*(m+1)*d, g: N*(m+1).
struct ItoProcess {
    const PathEnsemble* paths = nullptr;
    std::vector<double> y, z, g;
    std::size_t clamped = 0;   // extraction samples clamped to the space grid
    double clamp_frac = 0.0;

    std::size_t yidx(int p, int i) const {
        return static_cast<std::size_t>(p) * (paths->grid.m + 1) + i;
    }
    std::size_t zidx(int p, int i, int j = 0) const {
        return (static_cast<std::size_t>(p) * (paths->grid.m + 1) + i) * paths->d + j;
    }
    double yval(int p, int i) const { return y[yidx(p, i)]; }
    double zval(int p, int i, int j = 0) const { return z[zidx(p, i, j)]; }
};

/// Debug export, one row per (path, time): path,t,B_1..B_d.
inline void export_paths_csv(std::ostream& out, const PathEnsemble& ens, int max_paths = -1) {
    out << "path,t";
    for (int j = 0; j < ens.d; ++j) out << ",b" << (j + 1);
    out << "\n";
    const int P = max_paths < 0 ? ens.N : std::min(max_paths, ens.N);
    for (int p = 0; p < P; ++p)
        for (int i = 0; i <= ens.grid.m; ++i) {
            out << p << "," << fmt17(ens.grid.t(i));
            for (int j = 0; j < ens.d; ++j) out << "," << fmt17(ens.bval(p, i, j));
            out << "\n";
        }
}

} // namespace qbsde
