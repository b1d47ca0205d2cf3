#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "qbsde/driver.hpp"
#include "qbsde/paths.hpp"
#include "qbsde/terminal.hpp"
#include "qbsde/time_grid.hpp"

namespace qbsde {

/// Solution surface of u_t + 1/2 u_xx + f(t, u, u_x) = 0, u(T, .) = h on
/// [0,T] x [-L, L]. u and u_x are stored at the outer time steps, row i
/// holding time t_i.
struct ValueGrid {
    TimeGrid tg;
    double L = 8.0;
    double dx = 0.02;
    int J = 0; // x_j = -L + j*dx, j = 0..J

    std::vector<double> u, ux;

    double xcoord(int j) const { return -L + j * dx; }
    double at(int i, int j) const { return u[static_cast<std::size_t>(i) * (J + 1) + j]; }
    double uxat(int i, int j) const { return ux[static_cast<std::size_t>(i) * (J + 1) + j]; }

    /// Linear interpolation in x at outer time index i; x must be inside
    /// [-L, L] (callers clamp and account for clamping).
    double interp(const std::vector<double>& field, int i, double x) const {
        const double s = (x + L) / dx;
        int j = static_cast<int>(s);
        if (j < 0) j = 0;
        if (j >= J) j = J - 1;
        const double w = s - j;
        const std::size_t row = static_cast<std::size_t>(i) * (J + 1);
        return (1.0 - w) * field[row + j] + w * field[row + j + 1];
    }
    double interp_u(int i, double x) const { return interp(u, i, x); }
    double interp_ux(int i, double x) const { return interp(ux, i, x); }
};

struct SolveOptions {
    /// Inner step is dx^2 / (1 + stability_margin * M); sub-stepping makes a
    /// time-step violation impossible by construction.
    double stability_margin = 2.0;
    /// Declared z-Lipschitz bound of the (truncated) driver. When set, the
    /// space-monotonicity requirement lip_z <= 1/dx is enforced up front.
    double lip_z = 0.0;
    /// Slack for the a-priori sup bound check after the solve.
    double tol_grid = 1e-6;
};

struct SupBoundReport {
    double bound = 0.0;    // e^{MT} (|xi|_inf + MT)
    double max_abs = 0.0;
    double margin = 0.0;   // bound + tol - max_abs
    bool pass = false;
};

/// max |Y| against the a-priori bound e^{MT}(|xi|_inf + MT).
inline SupBoundReport sup_bound_check(double max_abs, double M, double xi_sup, double T,
                                      double tol = 1e-8) {
    SupBoundReport r;
    r.bound = std::exp(M * T) * (xi_sup + M * T);
    r.max_abs = max_abs;
    r.margin = r.bound + tol - max_abs;
    r.pass = r.margin >= 0.0;
    return r;
}

/// Explicit monotone finite differences, backward from t = T, with internal
/// sub-stepping. Boundary columns evolve with the one-sided gradient and no
/// diffusion (linear-extrapolation ghost nodes), which keeps the scheme
/// monotone there; L is expected to dominate the data scale so the boundary
/// never matters at the center.
inline ValueGrid solve_semilinear(const DriverSpec& fk, const TerminalCondition& h,
                                  TimeGrid tg, double dx, double L,
                                  const SolveOptions& opt = {}) {
    tg.check();
    fk.check();
    if (fk.n != 1 || fk.d != 1)
        throw std::invalid_argument("solve_semilinear: defined for n = d = 1");
    if (!(dx > 0.0) || !(L > 0.0))
        throw std::invalid_argument("solve_semilinear: dx and L must be positive");
    if (opt.lip_z > 0.0 && opt.lip_z * dx > 1.0) {
        std::ostringstream msg;
        msg << "solve_semilinear: dx = " << dx << " too coarse for z-slope bound "
            << opt.lip_z << " (monotonicity needs lip_z * dx <= 1)";
        throw std::invalid_argument(msg.str());
    }

    ValueGrid vg;
    vg.tg = tg;
    vg.L = L;
    vg.dx = dx;
    vg.J = static_cast<int>(std::lround(2.0 * L / dx));
    const int J = vg.J;
    if (J < 4) throw std::invalid_argument("solve_semilinear: grid too small");
    const int m = tg.m;
    vg.u.assign(static_cast<std::size_t>(m + 1) * (J + 1), 0.0);
    vg.ux.assign(vg.u.size(), 0.0);

    std::vector<double> cur(J + 1), nxt(J + 1);
    for (int j = 0; j <= J; ++j) cur[j] = h.h(vg.xcoord(j));
    std::copy(cur.begin(), cur.end(), vg.u.begin() + static_cast<std::size_t>(m) * (J + 1));

    const double dt = tg.dt();
    const double dstar = dx * dx / (1.0 + opt.stability_margin * fk.M);
    const int nsub = std::max(1, static_cast<int>(std::ceil(dt / dstar)));
    const double del = dt / nsub;
    const double inv2dx = 1.0 / (2.0 * dx);
    const double invdx2 = 1.0 / (dx * dx);

    for (int i = m - 1; i >= 0; --i) {
        // march from t_{i+1} down to t_i in nsub explicit substeps
        for (int s = 0; s < nsub; ++s) {
            const double tcur = tg.t(i + 1) - del * s; // f is sampled at the current layer
            nxt[0] = cur[0] + del * fk.eval11(tcur, cur[0], (cur[1] - cur[0]) / dx);
            nxt[J] = cur[J] + del * fk.eval11(tcur, cur[J], (cur[J] - cur[J - 1]) / dx);
            for (int j = 1; j < J; ++j) {
                const double uxx = (cur[j + 1] - 2.0 * cur[j] + cur[j - 1]) * invdx2;
                const double uxc = (cur[j + 1] - cur[j - 1]) * inv2dx;
                nxt[j] = cur[j] + del * (0.5 * uxx + fk.eval11(tcur, cur[j], uxc));
            }
            cur.swap(nxt);
        }
        for (int j = 0; j <= J; ++j) {
            const double v = cur[j];
            if (!std::isfinite(v)) {
                std::ostringstream msg;
                msg << "solve_semilinear: non-finite value at t = " << tg.t(i)
                    << ", x = " << vg.xcoord(j);
                throw std::runtime_error(msg.str());
            }
        }
        std::copy(cur.begin(), cur.end(), vg.u.begin() + static_cast<std::size_t>(i) * (J + 1));
    }

    for (int i = 0; i <= m; ++i) {
        const std::size_t row = static_cast<std::size_t>(i) * (J + 1);
        vg.ux[row] = (vg.u[row + 1] - vg.u[row]) / dx;
        vg.ux[row + J] = (vg.u[row + J] - vg.u[row + J - 1]) / dx;
        for (int j = 1; j < J; ++j)
            vg.ux[row + j] = (vg.u[row + j + 1] - vg.u[row + j - 1]) * inv2dx;
    }

    double umax = 0.0, hmax = 0.0;
    for (int j = 0; j <= J; ++j) hmax = std::max(hmax, std::abs(vg.at(m, j)));
    for (const double v : vg.u) umax = std::max(umax, std::abs(v));
    const auto sup = sup_bound_check(umax, fk.M, hmax, tg.T, opt.tol_grid * (1.0 + hmax));
    if (!sup.pass) {
        std::ostringstream msg;
        msg << "solve_semilinear: sup bound violated, max |u| = " << umax
            << " exceeds " << sup.bound;
        throw std::runtime_error(msg.str());
    }
    return vg;
}

struct ExtractOptions {
    /// Paths beyond the grid are clamped to [-L, L]; more than this fraction
    /// of clamped samples is a warning, and an error in strict mode.
    double clamp_warn_frac = 1e-3;
    bool strict = false;
};

/// Markovian extraction Y = u(t, B), Z = u_x(t, B), g = f^k(t, Y, Z) along
/// an ensemble sharing the solve's time grid.
inline ItoProcess extract_solution(const ValueGrid& vg, const PathEnsemble& ens,
                                   const DriverSpec& fk, const ExtractOptions& opt = {},
                                   int threads = 0) {
    if (ens.d != 1) throw std::invalid_argument("extract_solution: defined for d = 1");
    if (ens.grid.m != vg.tg.m || ens.grid.T != vg.tg.T)
        throw std::invalid_argument("extract_solution: ensemble and surface grids differ");
    ItoProcess out;
    out.paths = &ens;
    const int m = ens.grid.m;
    out.y.resize(static_cast<std::size_t>(ens.N) * (m + 1));
    out.z.resize(out.y.size());
    out.g.resize(out.y.size());

    std::vector<std::size_t> clamped_per_block((ens.N + kBlock - 1) / kBlock, 0);
    parallel_for_blocks(static_cast<std::size_t>(ens.N), resolve_threads(threads),
                        [&](std::size_t p0, std::size_t p1) {
                            std::size_t nclamp = 0;
                            for (std::size_t p = p0; p < p1; ++p) {
                                for (int i = 0; i <= m; ++i) {
                                    double x = ens.bval(static_cast<int>(p), i);
                                    if (x < -vg.L) { x = -vg.L; ++nclamp; }
                                    if (x > vg.L)  { x = vg.L;  ++nclamp; }
                                    const std::size_t k = p * (m + 1) + i;
                                    out.y[k] = vg.interp_u(i, x);
                                    out.z[k] = vg.interp_ux(i, x);
                                    out.g[k] = fk.eval11(ens.grid.t(i), out.y[k], out.z[k]);
                                }
                            }
                            clamped_per_block[p0 / kBlock] = nclamp;
                        });
    for (const std::size_t c : clamped_per_block) out.clamped += c;
    out.clamp_frac = static_cast<double>(out.clamped) /
                     static_cast<double>(out.y.size());
    if (out.clamp_frac > opt.clamp_warn_frac && opt.strict) {
        std::ostringstream msg;
        msg << "extract_solution: clamped fraction " << out.clamp_frac
            << " exceeds " << opt.clamp_warn_frac;
        throw std::runtime_error(msg.str());
    }
    return out;
}

} // namespace qbsde
