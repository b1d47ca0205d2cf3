#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "qbsde/driver.hpp"
#include "qbsde/parallel.hpp"
#include "qbsde/paths.hpp"
#include "qbsde/rng.hpp"
#include "qbsde/subharmonic.hpp"

namespace qbsde {

struct DriftOptions {
    int min_surviving = 30;
    double z_fail = 4.0; // reject only below -z_fail * se
};

struct DriftEstimate {
    double mu_hat = 0.0;       // drift per unit time of phi along the process
    double se = std::numeric_limits<double>::infinity();
    std::int64_t n_surviving = 0;
    double mean_duration = 0.0;
    bool usable = false;
};

/// Ratio estimator for the drift of t -> phi(t, B_t, Y_t) between the first
/// entry into dom phi and the first exit after it (both endpoints inside).
/// For a submartingale the expected increment over such a stopped segment is
/// nonnegative, so a strongly negative estimate is evidence against the
/// submartingale property.
inline DriftEstimate estimate_drift(const TestFunction& phi, const ItoProcess& proc,
                                    const DriftOptions& opt = {}, int threads = 0) {
    if (phi.n != 1) throw std::invalid_argument("estimate_drift: phi must have n = 1");
    const PathEnsemble& ens = *proc.paths;
    if (phi.d != ens.d) throw std::invalid_argument("estimate_drift: phi.d != ensemble d");
    const std::int64_t N = ens.N;
    const int m = ens.grid.m;
    const int d = ens.d;

    std::vector<double> dphi(N, 0.0), dur(N, 0.0);
    const int nt = resolve_threads(threads);
    parallel_for_blocks(N, nt, [&](std::int64_t b0, std::int64_t b1) {
        std::vector<double> xb(d);
        for (std::int64_t p = b0; p < b1; ++p) {
            int i0 = -1, ie = -1;
            for (int i = 0; i <= m; ++i) {
                for (int j = 0; j < d; ++j) xb[j] = ens.bval(p, i, j);
                const double yv = proc.yval(p, i);
                const bool in = phi.dom.contains(ens.grid.t(i), xb, {&yv, 1});
                if (i0 < 0) {
                    if (in) i0 = ie = i;
                } else if (in && ie == i - 1) {
                    ie = i;
                } else if (ie >= i0 && !in) {
                    break;
                }
            }
            if (i0 >= 0 && ie > i0) {
                for (int j = 0; j < d; ++j) xb[j] = ens.bval(p, i0, j);
                double ys = proc.yval(p, i0);
                const double v0 = phi.value(ens.grid.t(i0), xb, {&ys, 1});
                for (int j = 0; j < d; ++j) xb[j] = ens.bval(p, ie, j);
                ys = proc.yval(p, ie);
                const double v1 = phi.value(ens.grid.t(ie), xb, {&ys, 1});
                dphi[p] = v1 - v0;
                dur[p] = ens.grid.t(ie) - ens.grid.t(i0);
            }
        }
    });

    DriftEstimate est;
    double sum_phi = 0.0, sum_dur = 0.0;
    for (std::int64_t p = 0; p < N; ++p) {
        if (dur[p] > 0.0) {
            ++est.n_surviving;
            sum_phi += dphi[p];
            sum_dur += dur[p];
        }
    }
    if (est.n_surviving < opt.min_surviving || sum_dur <= 0.0) return est;
    est.mean_duration = sum_dur / static_cast<double>(est.n_surviving);
    est.mu_hat = sum_phi / sum_dur;
    double s2 = 0.0;
    for (std::int64_t p = 0; p < N; ++p) {
        if (dur[p] > 0.0) {
            const double r = dphi[p] - est.mu_hat * dur[p];
            s2 += r * r;
        }
    }
    const auto ns = static_cast<double>(est.n_surviving);
    s2 /= std::max(1.0, ns - 1.0);
    est.se = std::sqrt(s2 / ns) / est.mean_duration;
    est.usable = true;
    return est;
}

struct MartingaleTest {
    std::string phi_id;
    DriftEstimate drift;
    Verdict verdict = Verdict::inconclusive;
};

/// pass  : drift estimate is not significantly negative,
/// fail  : it is below -z_fail standard errors,
/// inconclusive : too few paths ever enter the domain.
inline MartingaleTest f_martingale_test(const TestFunction& phi, const ItoProcess& proc,
                                        const DriftOptions& opt = {}, int threads = 0) {
    MartingaleTest out;
    out.phi_id = phi.id;
    out.drift = estimate_drift(phi, proc, opt, threads);
    if (!out.drift.usable) {
        out.verdict = Verdict::inconclusive;
        return out;
    }
    out.verdict = (out.drift.mu_hat < -opt.z_fail * out.drift.se) ? Verdict::fail
                                                                  : Verdict::pass;
    return out;
}

struct AnsatzPick {
    AnsatzParams params;
    TestFunction phi;
};

struct AutoAnsatzOptions {
    double eps = 0.5;
    double r_y = 1.0;
    double min_r_dom = 0.02; // resample bases whose certified ball is tiny
    int max_time_index = -1; // cap the base time index; -1 = m/2
    std::uint64_t seed = 11;
};

/// Builds `count` certified test functions anchored at points of the
/// simulated (t, B, Y, Z) cloud, alternating the gradient sign. Bases whose
/// construction fails or certifies only a negligible ball are skipped (at
/// most 8x count attempts).
inline std::vector<AnsatzPick> auto_ansatz_family(const DriverSpec& f, const ItoProcess& proc,
                                                  int count,
                                                  const AutoAnsatzOptions& opt = {}) {
    if (f.n != 1) throw std::invalid_argument("auto_ansatz_family: driver must have n = 1");
    const PathEnsemble& ens = *proc.paths;
    const int m = ens.grid.m;
    const int imax = opt.max_time_index >= 0 ? std::min(opt.max_time_index, m) : m / 2;
    const CounterRng rng(opt.seed, kStreamBasePick);

    std::vector<AnsatzPick> picks;
    picks.reserve(count);
    const int max_attempts = 8 * count;
    for (int a = 0; a < max_attempts && static_cast<int>(picks.size()) < count; ++a) {
        const auto p = static_cast<std::int64_t>(rng.uniform(a, 0, 0) * ens.N) % ens.N;
        const int i = static_cast<int>(rng.uniform(a, 0, 1) * (imax + 1)) % (imax + 1);
        std::vector<double> xb(f.d), zb(f.d);
        for (int j = 0; j < f.d; ++j) {
            xb[j] = ens.bval(p, i, j);
            zb[j] = proc.zval(p, i, j);
        }
        const std::vector<double> yb{proc.yval(p, i)};
        const int sign = (static_cast<int>(picks.size()) % 2 == 0) ? 1 : -1;
        ConstructOptions copt;
        copt.seed = opt.seed + 131 * static_cast<std::uint64_t>(a);
        try {
            AnsatzParams ap = construct_subharmonic(f, ens.grid.t(i), xb, yb, zb, 0, sign,
                                                    opt.eps, opt.r_y, copt);
            if (ap.r_dom < opt.min_r_dom) continue;
            AnsatzPick pick{ap, ansatz_function(ap)};
            picks.push_back(std::move(pick));
        } catch (const std::runtime_error&) {
            continue; // base point not certifiable; try the next one
        }
    }
    if (static_cast<int>(picks.size()) < count)
        throw std::runtime_error("auto_ansatz_family: could not certify enough base points");
    return picks;
}

/// Normalized one-step residual of the pair (Y, Z) against the stored driver
/// values:  mean |dY + g dt - Z dB|^2 / mean |dY|^2. First-order in dt for a
/// discretized solution and exactly zero when the identity holds pathwise.
inline double bsde_residual(const ItoProcess& proc, int threads = 0) {
    const PathEnsemble& ens = *proc.paths;
    if (proc.g.empty()) throw std::invalid_argument("bsde_residual: driver values not stored");
    const int m = ens.grid.m;
    const int d = ens.d;
    const double dt = ens.grid.dt();
    const int nt = resolve_threads(threads);

    const MeanVar num = block_mean_var(ens.N, nt, [&](std::int64_t p) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) {
            double r = proc.yval(p, i + 1) - proc.yval(p, i) + proc.g[proc.yidx(p, i)] * dt;
            for (int j = 0; j < d; ++j)
                r -= proc.zval(p, i, j) * (ens.bval(p, i + 1, j) - ens.bval(p, i, j));
            s += r * r;
        }
        return s;
    });
    const MeanVar den = block_mean_var(ens.N, nt, [&](std::int64_t p) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) {
            const double r = proc.yval(p, i + 1) - proc.yval(p, i);
            s += r * r;
        }
        return s;
    });
    if (den.mean <= 0.0) return num.mean > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    return num.mean / den.mean;
}

struct BmoReport {
    double bmo = 0.0;  // max over (time, bin) cells of the mean residual energy
    int nbins = 0;
    double bmin = 0.0, bmax = 0.0;
    std::int64_t min_cell_count = 0;
};

/// Conditional residual-energy estimate: for each time index i and each
/// spatial bin of B_{t_i}, the average over member paths of
/// sum_{s >= i} |Z_s|^2 dt, maximized over nonempty cells. Suffix sums are
/// formed from one running prefix per path, so memory stays O(bins).
inline BmoReport bmo_estimate(const ItoProcess& proc, int nbins = 8) {
    const PathEnsemble& ens = *proc.paths;
    if (ens.d != 1) throw std::invalid_argument("bmo_estimate: implemented for d = 1");
    if (nbins < 1) throw std::invalid_argument("bmo_estimate: nbins must be >= 1");
    const std::int64_t N = ens.N;
    const int m = ens.grid.m;
    const double dt = ens.grid.dt();

    BmoReport rep;
    rep.nbins = nbins;
    rep.bmin = std::numeric_limits<double>::infinity();
    rep.bmax = -std::numeric_limits<double>::infinity();
    for (std::int64_t p = 0; p < N; ++p)
        for (int i = 0; i < m; ++i) {
            const double b = ens.bval(p, i, 0);
            rep.bmin = std::min(rep.bmin, b);
            rep.bmax = std::max(rep.bmax, b);
        }
    const double width = std::max(rep.bmax - rep.bmin, 1e-12);

    std::vector<double> cell_sum(static_cast<std::size_t>(m) * nbins, 0.0);
    std::vector<std::int64_t> cell_cnt(static_cast<std::size_t>(m) * nbins, 0);
    for (std::int64_t p = 0; p < N; ++p) {
        double total = 0.0;
        for (int i = 0; i < m; ++i) {
            const double z = proc.zval(p, i, 0);
            total += z * z * dt;
        }
        double prefix = 0.0;
        for (int i = 0; i < m; ++i) {
            const double b = ens.bval(p, i, 0);
            auto bin = static_cast<int>((b - rep.bmin) / width * nbins);
            bin = std::clamp(bin, 0, nbins - 1);
            cell_sum[static_cast<std::size_t>(i) * nbins + bin] += total - prefix;
            cell_cnt[static_cast<std::size_t>(i) * nbins + bin] += 1;
            const double z = proc.zval(p, i, 0);
            prefix += z * z * dt;
        }
    }
    rep.min_cell_count = N;
    for (std::size_t c = 0; c < cell_sum.size(); ++c) {
        if (cell_cnt[c] == 0) continue;
        rep.min_cell_count = std::min(rep.min_cell_count, cell_cnt[c]);
        rep.bmo = std::max(rep.bmo, cell_sum[c] / static_cast<double>(cell_cnt[c]));
    }
    return rep;
}

} // namespace qbsde
