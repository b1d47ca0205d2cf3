#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "qbsde/driver.hpp"
#include "qbsde/martingale.hpp"
#include "qbsde/parallel.hpp"
#include "qbsde/paths.hpp"
#include "qbsde/pde.hpp"
#include "qbsde/terminal.hpp"
#include "qbsde/time_grid.hpp"

namespace qbsde {

/// Forward Euler replay of a solution surface along the driving paths:
///   X_0     = u(0, 0),
///   X_{i+1} = X_i - f(t_i, X_i, Z_i) dt + proj_k(Z_i) dB_i,
/// where Z_i = u_x(t_i, B_i) and proj_k clips the stochastic integrand to
/// the slope ball when k_ball > 0. Only the terminal states are kept.
struct ForwardRun {
    double x0 = 0.0;
    std::vector<double> xT;
    double clamp_frac = 0.0; // fraction of grid lookups outside [-L, L]
};

inline ForwardRun simulate_forward(const ValueGrid& vg, const PathEnsemble& ens,
                                   const DriverSpec& fk, double k_ball, int threads = 0) {
    if (ens.d != 1 || fk.n != 1 || fk.d != 1)
        throw std::invalid_argument("simulate_forward: defined for n = d = 1");
    if (ens.grid.m != vg.tg.m || ens.grid.T != vg.tg.T)
        throw std::invalid_argument("simulate_forward: path and value grids disagree");
    const int m = ens.grid.m;
    const double dt = ens.grid.dt();

    ForwardRun run;
    run.x0 = vg.interp_u(0, 0.0);
    run.xT.assign(ens.N, 0.0);

    const int nt = resolve_threads(threads);
    const std::size_t nblocks = (static_cast<std::size_t>(ens.N) + kBlock - 1) / kBlock;
    std::vector<std::size_t> clamped(nblocks, 0);
    parallel_for_blocks(static_cast<std::size_t>(ens.N), nt,
                        [&](std::size_t b0, std::size_t b1) {
        std::size_t nclamp = 0;
        for (std::size_t p = b0; p < b1; ++p) {
            double x = run.x0;
            for (int i = 0; i < m; ++i) {
                double bx = ens.bval(static_cast<int>(p), i, 0);
                if (bx < -vg.L) { bx = -vg.L; ++nclamp; }
                if (bx > vg.L) { bx = vg.L; ++nclamp; }
                const double z = vg.interp_ux(i, bx);
                const double zi = k_ball > 0.0 ? std::clamp(z, -k_ball, k_ball) : z;
                const double db =
                    ens.bval(static_cast<int>(p), i + 1, 0) - ens.bval(static_cast<int>(p), i, 0);
                x += -fk.eval11(ens.grid.t(i), x, z) * dt + zi * db;
            }
            run.xT[p] = x;
        }
        clamped[b0 / kBlock] = nclamp;
    });
    std::size_t total_clamped = 0;
    for (const std::size_t c : clamped) total_clamped += c;
    run.clamp_frac = static_cast<double>(total_clamped) /
                     (static_cast<double>(ens.N) * static_cast<double>(m));
    return run;
}

struct GapStat {
    double value = 0.0; // E |X_T - h(B_T)|^p
    double se = 0.0;
    double p = 2.0;
};

inline GapStat terminal_gap(const ForwardRun& run, const PathEnsemble& ens,
                            const TerminalCondition& h, double p = 2.0, int threads = 0) {
    if (ens.d != 1) throw std::invalid_argument("terminal_gap: defined for d = 1");
    if (static_cast<std::size_t>(ens.N) != run.xT.size())
        throw std::invalid_argument("terminal_gap: run does not match ensemble");
    const int m = ens.grid.m;
    const int nt = resolve_threads(threads);
    const MeanVar mv = block_mean_var(run.xT.size(), nt, [&](std::size_t q) {
        const double xi = h.h(ens.bval(static_cast<int>(q), m, 0));
        return std::pow(std::abs(run.xT[q] - xi), p);
    });
    return GapStat{mv.mean, mv.se, p};
}

struct PipelineRow {
    double k = 0.0;
    double y0 = 0.0;
    double gap_p2 = 0.0;
    double gap_se = 0.0;
    double sup_margin = 0.0;
    double bmo_hat = 0.0;
    double residual = 0.0;
    double clamp_frac = 0.0;
};

struct PipelineOptions {
    std::vector<double> schedule; // empty -> {1, 2, 4, 8, 16}
    int N = 20000;
    TimeGrid grid{1.0, 200};
    double dx = 0.02;
    double L = 8.0;
    std::uint64_t seed = 2026;
    double gap_p = 2.0;
    /// Stop once |y0_k - y0_prev| drops below this; 0 runs the whole schedule.
    double early_stop_gap = 0.0;
    int bmo_bins = 8;
    int threads = 0;
    double stability_margin = 2.0;
    bool keep_process = false; // retain the last level's sampled (Y, Z)
};

struct PipelineReport {
    std::vector<PipelineRow> rows;
    bool early_stopped = false;
    double y0_limit = 0.0;
    /// populated when keep_process is set (last computed level)
    ValueGrid last_grid;
    ItoProcess last_process;
    /// shared driving paths; heap-held so last_process stays valid when the
    /// report is moved around
    std::shared_ptr<PathEnsemble> paths;
};

/// Increasing-truncation sweep: solve the PDE for the k-truncated driver,
/// replay it forward along one shared path ensemble, and report per level
/// the start value, the terminal mismatch E|X_T - xi|^p, the sup-bound
/// margin, the conditional residual-energy estimate and the one-step
/// residual. Monotone convergence of y0 and vanishing gaps are the
/// observable signature that the truncations settle on a solution.
inline PipelineReport kobylanski_pipeline(const DriverSpec& f, const TerminalCondition& h,
                                          const PipelineOptions& opt = {}) {
    f.check();
    if (f.n != 1 || f.d != 1)
        throw std::invalid_argument("kobylanski_pipeline: defined for n = d = 1");
    std::vector<double> schedule = opt.schedule;
    if (schedule.empty()) schedule = {1.0, 2.0, 4.0, 8.0, 16.0};
    for (std::size_t s = 1; s < schedule.size(); ++s)
        if (!(schedule[s] > schedule[s - 1]))
            throw std::invalid_argument("kobylanski_pipeline: schedule must increase");

    PipelineReport rep;
    rep.paths = std::make_shared<PathEnsemble>(simulate_bm(opt.grid, opt.N, 1, opt.seed,
                                                           opt.threads));
    const PathEnsemble& ens = *rep.paths;

    // a-priori sup bound from the data actually on the grid
    double hsup = 0.0;
    {
        const int J = static_cast<int>(std::lround(2.0 * opt.L / opt.dx));
        for (int j = 0; j <= J; ++j)
            hsup = std::max(hsup, std::abs(h.h(-opt.L + j * opt.dx)));
        if (h.sup_norm) hsup = std::min(hsup, *h.sup_norm);
    }
    const double ybound = std::exp(f.M * opt.grid.T) * (hsup + f.M * opt.grid.T);

    for (const double k : schedule) {
        const DriverSpec fk = truncate(f, k);
        SolveOptions sopt;
        sopt.stability_margin = opt.stability_margin;
        sopt.lip_z = z_slope_hint(f, ybound, k);
        ValueGrid vg = solve_semilinear(fk, h, opt.grid, opt.dx, opt.L, sopt);

        double max_abs = 0.0;
        for (const double v : vg.u) max_abs = std::max(max_abs, std::abs(v));
        const SupBoundReport sb = sup_bound_check(max_abs, f.M, hsup, opt.grid.T);

        ItoProcess proc = extract_solution(vg, ens, fk, {}, opt.threads);
        const ForwardRun run = simulate_forward(vg, ens, fk, k, opt.threads);
        const GapStat gap = terminal_gap(run, ens, h, opt.gap_p, opt.threads);

        PipelineRow row;
        row.k = k;
        row.y0 = run.x0;
        row.gap_p2 = gap.value;
        row.gap_se = gap.se;
        row.sup_margin = sb.margin;
        row.bmo_hat = bmo_estimate(proc, opt.bmo_bins).bmo;
        row.residual = bsde_residual(proc, opt.threads);
        row.clamp_frac = std::max(run.clamp_frac, proc.clamp_frac);
        rep.rows.push_back(row);

        if (opt.keep_process) {
            rep.last_grid = std::move(vg);
            rep.last_process = std::move(proc);
        }

        const std::size_t r = rep.rows.size();
        if (opt.early_stop_gap > 0.0 && r >= 2 &&
            std::abs(rep.rows[r - 1].y0 - rep.rows[r - 2].y0) < opt.early_stop_gap) {
            rep.early_stopped = true;
            break;
        }
    }
    rep.y0_limit = rep.rows.back().y0;
    return rep;
}

} // namespace qbsde
