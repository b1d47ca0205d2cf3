#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "qbsde/driver.hpp"
#include "qbsde/parallel.hpp"
#include "qbsde/paths.hpp"
#include "qbsde/pde.hpp"
#include "qbsde/rng.hpp"
#include "qbsde/terminal.hpp"

namespace qbsde {

/// Instantaneous correlation between the two driving motions. `constant`
/// uses a fixed rho in [-1, 1]; `threshold` couples fully while the first
/// leg's slope is moderate and decouples on the spike set:
///   rho_t = 1{ |Z^1_t|^2 <= 1/eps }.
struct LocalCorrelation {
    enum class Kind { constant, threshold };
    Kind kind = Kind::constant;
    double rho = 1.0;
    double eps = 0.0;

    static LocalCorrelation make_constant(double r) {
        if (!(r >= -1.0 && r <= 1.0))
            throw std::invalid_argument("LocalCorrelation: rho must be in [-1, 1]");
        LocalCorrelation c;
        c.kind = Kind::constant;
        c.rho = r;
        return c;
    }
    static LocalCorrelation make_threshold(double eps) {
        if (!(eps > 0.0)) throw std::invalid_argument("LocalCorrelation: eps must be positive");
        LocalCorrelation c;
        c.kind = Kind::threshold;
        c.eps = eps;
        return c;
    }
};

/// Pair of Brownian motions with dB^2 = rho dB^1 + sqrt(1 - rho^2) dW.
/// When rho_i == 1 the second increment is copied verbatim, so fully coupled
/// stretches agree bit for bit. decoup[p] accumulates (1 - rho_i) dt.
struct CoupledPaths {
    PathEnsemble b1;
    std::vector<double> b2;
    std::vector<double> decoup;

    double bval2(int p, int i) const { return b2[b1.idx(p, i, 0)]; }
};

/// z1sq(i, x) supplies |Z^1|^2 at outer time index i and first-leg position
/// x for the threshold rule; it may be null for constant correlations.
inline CoupledPaths simulate_coupled_bm(TimeGrid grid, int N, std::uint64_t seed,
                                        const LocalCorrelation& corr,
                                        const std::function<double(int, double)>& z1sq,
                                        int threads = 0) {
    grid.check();
    if (corr.kind == LocalCorrelation::Kind::threshold && !z1sq)
        throw std::invalid_argument("simulate_coupled_bm: threshold rule needs a slope field");
    CoupledPaths cp;
    cp.b1 = simulate_bm(grid, N, 1, seed, threads, kStreamPrimary);
    cp.b2.assign(cp.b1.b.size(), 0.0);
    cp.decoup.assign(N, 0.0);

    const CounterRng rng1(seed, kStreamPrimary);
    const CounterRng rngW(seed, kStreamCoupling);
    const int m = grid.m;
    const double dt = grid.dt();
    const int nt = resolve_threads(threads);
    parallel_for_blocks(static_cast<std::size_t>(N), nt, [&](std::size_t p0, std::size_t p1) {
        for (std::size_t q = p0; q < p1; ++q) {
            const int p = static_cast<int>(q);
            double x2 = 0.0;
            double dec = 0.0;
            cp.b2[cp.b1.idx(p, 0, 0)] = 0.0;
            for (int i = 0; i < m; ++i) {
                double rho;
                if (corr.kind == LocalCorrelation::Kind::constant) {
                    rho = corr.rho;
                } else {
                    rho = (z1sq(i, cp.b1.bval(p, i, 0)) <= 1.0 / corr.eps) ? 1.0 : 0.0;
                }
                const double db1 = cp.b1.bval(p, i + 1, 0) - cp.b1.bval(p, i, 0);
                double db2;
                if (rho == 1.0) {
                    db2 = db1;
                } else {
                    const double dw = bm_increment(rngW, dt, p, i, 0);
                    db2 = rho * db1 + std::sqrt(std::max(0.0, 1.0 - rho * rho)) * dw;
                }
                x2 += db2;
                cp.b2[cp.b1.idx(p, i + 1, 0)] = x2;
                dec += (1.0 - rho) * dt;
            }
            cp.decoup[q] = dec;
        }
    });
    return cp;
}

struct CoupleOptions {
    int N = 20000;
    TimeGrid grid{1.0, 200};
    double dx = 0.02;
    double L = 8.0;
    double k_solve = 16.0; // truncation level used for the reference surface
    std::uint64_t seed = 2026;
    double p = 2.0;
    int se_blocks = 16;
    int threads = 0;
};

/// One coupling experiment at a fixed correlation rule.
struct CoupleResult {
    double r_or_eps = 0.0;
    bool threshold = false;
    double lhs = 0.0;      // E |Y^1_T - Y^2_T|^2
    double lhs_se = 0.0;
    double sp = 0.0;       // E sup_t |Y^1_t - Y^2_t|^p
    double rhs_arg = 0.0;  // E integral (1 - rho_t) dt
    double ratio_p2 = 0.0; // sp / rhs_arg
    double ratio_se = 0.0; // spread across contiguous path blocks
    bool degenerate = false; // sp below noise floor (e.g. rho = 1): ratio skipped
    std::optional<double> tail_prob; // threshold rule only
};

/// Couples two motions, reads both solution legs off one k-truncated
/// surface, and measures how the gap between the legs responds to the amount
/// of decoupling. With rho = 1 both legs coincide bit for bit and every gap
/// is exactly zero.
inline CoupleResult couple_solutions(const DriverSpec& f, const TerminalCondition& h,
                                     const LocalCorrelation& corr,
                                     const CoupleOptions& opt = {}) {
    f.check();
    if (f.n != 1 || f.d != 1)
        throw std::invalid_argument("couple_solutions: defined for n = d = 1");
    const DriverSpec fk = truncate(f, opt.k_solve);
    double hsup = 0.0;
    {
        const int J = static_cast<int>(std::lround(2.0 * opt.L / opt.dx));
        for (int j = 0; j <= J; ++j)
            hsup = std::max(hsup, std::abs(h.h(-opt.L + j * opt.dx)));
        if (h.sup_norm) hsup = std::min(hsup, *h.sup_norm);
    }
    const double ybound = std::exp(f.M * opt.grid.T) * (hsup + f.M * opt.grid.T);
    SolveOptions sopt;
    sopt.lip_z = z_slope_hint(f, ybound, opt.k_solve);
    const ValueGrid vg = solve_semilinear(fk, h, opt.grid, opt.dx, opt.L, sopt);

    auto z1sq = [&vg](int i, double x) {
        const double z = vg.interp_ux(i, std::clamp(x, -vg.L, vg.L));
        return z * z;
    };
    const CoupledPaths cp =
        simulate_coupled_bm(opt.grid, opt.N, opt.seed, corr, z1sq, opt.threads);

    const int N = opt.N;
    const int m = opt.grid.m;
    const double dt = opt.grid.dt();
    std::vector<double> term2(N, 0.0), supp(N, 0.0), tailex(N, 0.0);
    const int nt = resolve_threads(opt.threads);
    parallel_for_blocks(static_cast<std::size_t>(N), nt, [&](std::size_t p0, std::size_t p1) {
        for (std::size_t q = p0; q < p1; ++q) {
            const int p = static_cast<int>(q);
            double sup = 0.0, last = 0.0, excess = 0.0;
            for (int i = 0; i <= m; ++i) {
                const double x1 = std::clamp(cp.b1.bval(p, i, 0), -vg.L, vg.L);
                const double x2 = std::clamp(cp.bval2(p, i), -vg.L, vg.L);
                const double diff = vg.interp_u(i, x1) - vg.interp_u(i, x2);
                sup = std::max(sup, std::pow(std::abs(diff), opt.p));
                if (i == m) last = diff * diff;
                if (corr.kind == LocalCorrelation::Kind::threshold && i < m) {
                    const double zz = z1sq(i, cp.b1.bval(p, i, 0));
                    if (zz > 1.0 / corr.eps) excess += zz * dt;
                }
            }
            term2[q] = last;
            supp[q] = sup;
            tailex[q] = excess;
        }
    });

    CoupleResult res;
    res.threshold = corr.kind == LocalCorrelation::Kind::threshold;
    res.r_or_eps = res.threshold ? corr.eps : corr.rho;

    double s_term = 0.0, s_term2 = 0.0, s_sup = 0.0, s_dec = 0.0;
    for (int p = 0; p < N; ++p) {
        s_term += term2[p];
        s_term2 += term2[p] * term2[p];
        s_sup += supp[p];
        s_dec += cp.decoup[p];
    }
    res.lhs = s_term / N;
    if (N > 1) {
        const double var = std::max(0.0, (s_term2 - N * res.lhs * res.lhs) / (N - 1.0));
        res.lhs_se = std::sqrt(var / N);
    }
    res.sp = s_sup / N;
    res.rhs_arg = s_dec / N;

    if (res.sp < 1e-8) {
        res.degenerate = true;
    } else if (res.rhs_arg > 0.0) {
        res.ratio_p2 = res.sp / res.rhs_arg;
        // spread of the ratio across contiguous path blocks
        std::vector<double> ratios;
        for (int b = 0; b < opt.se_blocks; ++b) {
            const int lo = static_cast<int>((static_cast<std::int64_t>(b) * N) / opt.se_blocks);
            const int hi =
                static_cast<int>((static_cast<std::int64_t>(b + 1) * N) / opt.se_blocks);
            if (hi <= lo) continue;
            double bs = 0.0, bd = 0.0;
            for (int p = lo; p < hi; ++p) {
                bs += supp[p];
                bd += cp.decoup[p];
            }
            if (bd > 0.0) ratios.push_back(bs / bd);
        }
        if (ratios.size() > 1) {
            double mu = 0.0;
            for (const double r : ratios) mu += r;
            mu /= static_cast<double>(ratios.size());
            double v = 0.0;
            for (const double r : ratios) v += (r - mu) * (r - mu);
            v /= static_cast<double>(ratios.size() - 1);
            res.ratio_se = std::sqrt(v / static_cast<double>(ratios.size()));
        }
    } else {
        res.degenerate = true;
    }

    if (res.threshold) {
        std::int64_t over = 0;
        for (int p = 0; p < N; ++p)
            if (tailex[p] > corr.eps) ++over;
        res.tail_prob = static_cast<double>(over) / N;
    }
    return res;
}

struct TailReport {
    double eps = 0.0;
    double prob = 0.0;       // P[ integral of |Z|^2 over the spike set > eps ]
    double se = 0.0;
    double max_excess = 0.0; // largest per-path spike-set energy seen
};

/// Spike-set energy tail of a sampled solution: per path,
/// A = sum_i |Z_i|^2 1{|Z_i|^2 > 1/eps} dt, report P[A > eps].
inline TailReport tail_estimate(const ItoProcess& proc, double eps, int threads = 0) {
    if (!(eps > 0.0)) throw std::invalid_argument("tail_estimate: eps must be positive");
    const PathEnsemble& ens = *proc.paths;
    const int m = ens.grid.m;
    const double dt = ens.grid.dt();
    const int nt = resolve_threads(threads);
    std::vector<double> excess(ens.N, 0.0);
    parallel_for_blocks(static_cast<std::size_t>(ens.N), nt,
                        [&](std::size_t p0, std::size_t p1) {
        for (std::size_t q = p0; q < p1; ++q) {
            double a = 0.0;
            for (int i = 0; i < m; ++i) {
                double zz = 0.0;
                for (int j = 0; j < ens.d; ++j) {
                    const double z = proc.zval(static_cast<int>(q), i, j);
                    zz += z * z;
                }
                if (zz > 1.0 / eps) a += zz * dt;
            }
            excess[q] = a;
        }
    });
    TailReport rep;
    rep.eps = eps;
    std::int64_t over = 0;
    for (int p = 0; p < ens.N; ++p) {
        if (excess[p] > eps) ++over;
        rep.max_excess = std::max(rep.max_excess, excess[p]);
    }
    rep.prob = static_cast<double>(over) / ens.N;
    rep.se = std::sqrt(std::max(0.0, rep.prob * (1.0 - rep.prob) / ens.N));
    return rep;
}

struct UiReport {
    double delta = 0.0;
    double tau_mean = 0.0;  // mean of the first time the tail energy is <= delta
    double tau_max = 0.0;
    double frac_immediate = 0.0; // paths whose whole energy already sits below delta
};

/// Tail-energy clock: tau_delta = inf{ t_i : sum_{s >= i} |Z_s|^2 dt <= delta }.
/// Uniformly small tails push tau_delta toward zero.
inline UiReport ui_report(const ItoProcess& proc, double delta) {
    if (!(delta >= 0.0)) throw std::invalid_argument("ui_report: delta must be >= 0");
    const PathEnsemble& ens = *proc.paths;
    const int m = ens.grid.m;
    const double dt = ens.grid.dt();
    UiReport rep;
    rep.delta = delta;
    double sum_tau = 0.0;
    std::int64_t immediate = 0;
    for (int p = 0; p < ens.N; ++p) {
        double total = 0.0;
        for (int i = 0; i < m; ++i) {
            const double z = proc.zval(p, i, 0);
            total += z * z * dt;
        }
        double prefix = 0.0;
        double tau = ens.grid.T;
        for (int i = 0; i <= m; ++i) {
            if (total - prefix <= delta) {
                tau = ens.grid.t(i);
                break;
            }
            const double z = proc.zval(p, i, 0);
            prefix += z * z * dt;
        }
        if (tau == 0.0) ++immediate;
        sum_tau += tau;
        rep.tau_max = std::max(rep.tau_max, tau);
    }
    rep.tau_mean = sum_tau / ens.N;
    rep.frac_immediate = static_cast<double>(immediate) / ens.N;
    return rep;
}

} // namespace qbsde
