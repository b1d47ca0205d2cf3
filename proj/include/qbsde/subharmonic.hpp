#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "qbsde/driver.hpp"
#include "qbsde/linalg.hpp"
#include "qbsde/rng.hpp"

namespace qbsde {

/// Bounded region of (t, x, y) space on which a test function is tracked.
struct Domain {
    enum class Kind { ball, box };
    Kind kind = Kind::ball;

    // ball: Euclidean ball of the joint (t, x, y) coordinates
    double t0 = 0.0;
    std::vector<double> x0, y0;
    double radius = 1.0;

    // box: [tlo, thi] x prod_j [xlo_j, xhi_j] x prod_i [ylo_i, yhi_i]
    double tlo = 0.0, thi = 1.0;
    std::vector<double> xlo, xhi, ylo, yhi;

    static Domain make_ball(double t, std::vector<double> x, std::vector<double> y, double r) {
        Domain d;
        d.kind = Kind::ball;
        d.t0 = t;
        d.x0 = std::move(x);
        d.y0 = std::move(y);
        d.radius = r;
        return d;
    }
    static Domain make_box(double tlo, double thi, std::vector<double> xlo,
                           std::vector<double> xhi, std::vector<double> ylo,
                           std::vector<double> yhi) {
        Domain d;
        d.kind = Kind::box;
        d.tlo = tlo;
        d.thi = thi;
        d.xlo = std::move(xlo);
        d.xhi = std::move(xhi);
        d.ylo = std::move(ylo);
        d.yhi = std::move(yhi);
        return d;
    }

    bool contains(double t, std::span<const double> x, std::span<const double> y) const {
        if (kind == Kind::ball) {
            double s = (t - t0) * (t - t0);
            for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - x0[j]) * (x[j] - x0[j]);
            for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - y0[i]) * (y[i] - y0[i]);
            return s < radius * radius;
        }
        if (t < tlo || t > thi) return false;
        for (std::size_t j = 0; j < x.size(); ++j)
            if (x[j] < xlo[j] || x[j] > xhi[j]) return false;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y[i] < ylo[i] || y[i] > yhi[i]) return false;
        return true;
    }

    /// Uniform sample indexed by `s`; deterministic in (rng, s).
    void sample(const CounterRng& rng, std::uint64_t s, double& t, std::vector<double>& x,
                std::vector<double>& y) const {
        if (kind == Kind::ball) {
            const std::size_t q = 1 + x0.size() + y0.size();
            std::vector<double> g(q);
            double nrm = 0.0;
            for (std::size_t k = 0; k < q; ++k) {
                g[k] = rng.gaussian(s, 0, k);
                nrm += g[k] * g[k];
            }
            nrm = std::sqrt(std::max(nrm, 1e-300));
            const double u = rng.uniform(s, 1, 0);
            const double r = radius * std::pow(u, 1.0 / static_cast<double>(q));
            t = t0 + r * g[0] / nrm;
            x.resize(x0.size());
            y.resize(y0.size());
            for (std::size_t j = 0; j < x0.size(); ++j) x[j] = x0[j] + r * g[1 + j] / nrm;
            for (std::size_t i = 0; i < y0.size(); ++i)
                y[i] = y0[i] + r * g[1 + x0.size() + i] / nrm;
            return;
        }
        std::uint64_t slot = 0;
        t = tlo + (thi - tlo) * rng.uniform(s, 0, slot++);
        x.resize(xlo.size());
        y.resize(ylo.size());
        for (std::size_t j = 0; j < x.size(); ++j)
            x[j] = xlo[j] + (xhi[j] - xlo[j]) * rng.uniform(s, 0, slot++);
        for (std::size_t i = 0; i < y.size(); ++i)
            y[i] = ylo[i] + (yhi[i] - ylo[i]) * rng.uniform(s, 0, slot++);
    }
};

/// Smooth test function phi(t, x, y) with the partial derivatives the
/// operator calculus needs. Analytic partials are used when provided;
/// otherwise central finite differences on the evaluator fill in.
struct TestFunction {
    std::string id;
    int d = 1;
    int n = 1;
    Domain dom;
    std::vector<double> z_center; // hint for the z search; empty = origin

    using Point = std::function<double(double, std::span<const double>, std::span<const double>)>;
    Point value;

    // optional analytic partials (provide all or none)
    Point dt;
    std::function<double(double, std::span<const double>, std::span<const double>, int)> dy;
    std::function<double(double, std::span<const double>, std::span<const double>, int, int)> dyy;
    std::function<double(double, std::span<const double>, std::span<const double>, int, int)> dxy;
    std::function<double(double, std::span<const double>, std::span<const double>, int)> dxx;

    bool analytic() const { return static_cast<bool>(dy); }
};

/// Partial derivatives of phi at one point, in the layout the operator uses:
/// pyy is n x n row-major, pxy is indexed [j * n + i], pxx holds only the
/// diagonal second x-derivatives.
struct Partials {
    double pt = 0.0;
    std::vector<double> py, pyy, pxy, pxx;
};

namespace detail {

inline double fd_shift(const TestFunction& phi, double t, std::vector<double> x,
                       std::vector<double> y, int coord, double h) {
    // coord: 0 = t, 1..d = x_j, d+1..d+n = y_i
    if (coord == 0) t += h;
    else if (coord <= phi.d) x[coord - 1] += h;
    else y[coord - 1 - phi.d] += h;
    return phi.value(t, x, y);
}

inline double fd_second(const TestFunction& phi, double t, const std::vector<double>& x,
                        const std::vector<double>& y, int ca, int cb, double ha, double hb) {
    if (ca == cb) {
        auto at = [&](double s) { return fd_shift(phi, t, x, y, ca, s); };
        return (at(ha) - 2.0 * phi.value(t, x, y) + at(-ha)) / (ha * ha);
    }
    auto at2 = [&](double sa, double sb) {
        double tt = t;
        std::vector<double> xx = x, yy = y;
        auto apply = [&](int c, double s) {
            if (c == 0) tt += s;
            else if (c <= phi.d) xx[c - 1] += s;
            else yy[c - 1 - phi.d] += s;
        };
        apply(ca, sa);
        apply(cb, sb);
        return phi.value(tt, xx, yy);
    };
    return (at2(ha, hb) - at2(ha, -hb) - at2(-ha, hb) + at2(-ha, -hb)) / (4.0 * ha * hb);
}

} // namespace detail

inline Partials partials_at(const TestFunction& phi, double t, std::span<const double> xs,
                            std::span<const double> ys) {
    const int n = phi.n, d = phi.d;
    Partials P;
    P.py.assign(n, 0.0);
    P.pyy.assign(static_cast<std::size_t>(n) * n, 0.0);
    P.pxy.assign(static_cast<std::size_t>(d) * n, 0.0);
    P.pxx.assign(d, 0.0);

    if (phi.analytic()) {
        P.pt = phi.dt ? phi.dt(t, xs, ys) : 0.0;
        for (int i = 0; i < n; ++i) P.py[i] = phi.dy(t, xs, ys, i);
        for (int i = 0; i < n; ++i)
            for (int i2 = i; i2 < n; ++i2) {
                const double v = phi.dyy(t, xs, ys, i, i2);
                P.pyy[static_cast<std::size_t>(i) * n + i2] = v;
                P.pyy[static_cast<std::size_t>(i2) * n + i] = v;
            }
        for (int j = 0; j < d; ++j)
            for (int i = 0; i < n; ++i) P.pxy[static_cast<std::size_t>(j) * n + i] = phi.dxy(t, xs, ys, j, i);
        for (int j = 0; j < d; ++j) P.pxx[j] = phi.dxx(t, xs, ys, j);
        return P;
    }

    const std::vector<double> x(xs.begin(), xs.end());
    const std::vector<double> y(ys.begin(), ys.end());
    auto h1 = [](double v) { return 1e-5 * (1.0 + std::abs(v)); };
    auto h2 = [](double v) { return 1e-4 * (1.0 + std::abs(v)); };
    const double ht = h1(t);
    P.pt = (detail::fd_shift(phi, t, x, y, 0, ht) - detail::fd_shift(phi, t, x, y, 0, -ht)) /
           (2.0 * ht);
    for (int i = 0; i < n; ++i) {
        const double h = h1(y[i]);
        P.py[i] = (detail::fd_shift(phi, t, x, y, d + 1 + i, h) -
                   detail::fd_shift(phi, t, x, y, d + 1 + i, -h)) /
                  (2.0 * h);
    }
    for (int i = 0; i < n; ++i)
        for (int i2 = i; i2 < n; ++i2) {
            const double v = detail::fd_second(phi, t, x, y, d + 1 + i, d + 1 + i2,
                                               h2(y[i]), h2(y[i2]));
            P.pyy[static_cast<std::size_t>(i) * n + i2] = v;
            P.pyy[static_cast<std::size_t>(i2) * n + i] = v;
        }
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < n; ++i)
            P.pxy[static_cast<std::size_t>(j) * n + i] =
                detail::fd_second(phi, t, x, y, 1 + j, d + 1 + i, h2(x[j]), h2(y[i]));
    for (int j = 0; j < d; ++j)
        P.pxx[j] = detail::fd_second(phi, t, x, y, 1 + j, 1 + j, h2(x[j]), h2(x[j]));
    return P;
}

/// Largest relative disagreement between analytic partials and a finite
/// difference probe of the evaluator, over seeded interior samples.
inline double validate_partials(const TestFunction& phi, int samples, std::uint64_t seed) {
    if (!phi.analytic()) return 0.0;
    TestFunction probe = phi;
    probe.dy = nullptr; // force the FD route
    const CounterRng rng(seed, kStreamDomain);
    double worst = 0.0;
    double t;
    std::vector<double> x, y;
    for (int s = 0; s < samples; ++s) {
        phi.dom.sample(rng, static_cast<std::uint64_t>(s), t, x, y);
        const Partials a = partials_at(phi, t, x, y);
        const Partials b = partials_at(probe, t, x, y);
        auto rel = [&](double u, double v) {
            return std::abs(u - v) / (1.0 + std::max(std::abs(u), std::abs(v)));
        };
        worst = std::max(worst, rel(a.pt, b.pt));
        for (std::size_t k = 0; k < a.py.size(); ++k) worst = std::max(worst, rel(a.py[k], b.py[k]));
        for (std::size_t k = 0; k < a.pyy.size(); ++k)
            worst = std::max(worst, rel(a.pyy[k], b.pyy[k]));
        for (std::size_t k = 0; k < a.pxy.size(); ++k)
            worst = std::max(worst, rel(a.pxy[k], b.pxy[k]));
        for (std::size_t k = 0; k < a.pxx.size(); ++k)
            worst = std::max(worst, rel(a.pxx[k], b.pxx[k]));
    }
    return worst;
}

namespace detail {

inline double op_value(const Partials& P, std::span<const double> fv,
                       std::span<const double> z, int n, int d) {
    double L = P.pt;
    for (int i = 0; i < n; ++i) L -= P.py[i] * fv[i];
    for (int i = 0; i < n; ++i)
        for (int i2 = 0; i2 < n; ++i2) {
            double zz = 0.0;
            for (int j = 0; j < d; ++j) zz += z[i * d + j] * z[i2 * d + j];
            L += 0.5 * P.pyy[static_cast<std::size_t>(i) * n + i2] * zz;
        }
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < n; ++i)
            L += P.pxy[static_cast<std::size_t>(j) * n + i] * z[i * d + j];
    for (int j = 0; j < d; ++j) L += 0.5 * P.pxx[j];
    return L;
}

} // namespace detail

/// The drift operator applied to phi at (t, x, y) with slope matrix z
/// (n x d, row-major):
///   L phi = phi_t - sum_i phi_{y_i} f^i
///         + 1/2 sum_{i,i'} phi_{y_i y_i'} <z^i, z^i'>
///         + sum_{i,j} phi_{x_j y_i} z^i_j + 1/2 sum_j phi_{x_j x_j}.
/// phi is f-subharmonic on its domain precisely when this is nonnegative for
/// every z.
inline double eval_Lf(const DriverSpec& f, const TestFunction& phi, double t,
                      std::span<const double> x, std::span<const double> y,
                      std::span<const double> z) {
    if (phi.n != f.n || phi.d != f.d)
        throw std::invalid_argument("eval_Lf: dimension mismatch between phi and driver");
    const Partials P = partials_at(phi, t, x, y);
    std::vector<double> fv(f.n);
    f.eval(t, y, z, fv);
    return detail::op_value(P, fv, z, f.n, f.d);
}

/// For n = 1 and a vanishing driver, the operator is the quadratic form
/// 1/2 <xi, H xi> in xi = (|z|, z/|z|). Returns H as a (d+1)^2 row-major
/// matrix: [ phi_yy, phi_{y x_j} ; phi_{x_j y}, Delta_x phi * I_d ].
/// Exact for time-independent phi.
inline std::vector<double> build_H(const TestFunction& phi, double t,
                                   std::span<const double> x, std::span<const double> y) {
    if (phi.n != 1) throw std::invalid_argument("build_H: defined for n = 1");
    const Partials P = partials_at(phi, t, x, y);
    const int d = phi.d;
    std::vector<double> H(static_cast<std::size_t>(d + 1) * (d + 1), 0.0);
    H[0] = P.pyy[0];
    double lap = 0.0;
    for (int j = 0; j < d; ++j) lap += P.pxx[j];
    for (int j = 0; j < d; ++j) {
        H[static_cast<std::size_t>(1 + j)] = P.pxy[j];
        H[static_cast<std::size_t>(1 + j) * (d + 1)] = P.pxy[j];
        H[static_cast<std::size_t>(1 + j) * (d + 1) + 1 + j] = lap;
    }
    return H;
}

/// l(z) = a0 + b0 |z - zbar| + c0 |z - zbar|^2 with b0, c0 >= 0.
struct ConeQuadratic {
    double a0 = 0.0, b0 = 0.0, c0 = 0.0;
    std::vector<double> zbar;
};

/// q(z) = d0 + e0 |z - zbar|^2 with e0 > 0.
struct PureQuadratic {
    double d0 = 0.0, e0 = 0.0;
    std::vector<double> zbar;
};

struct MajorizeResult {
    PureQuadratic q;
    double eta = 0.0;
    /// min over r >= 0 of q - l along the ray; equals eps/2 by construction.
    double min_slack = 0.0;
};

/// Dominating purely quadratic majorant with apex error at most eps:
///   eta = max(b0^2 / (2 eps), eps),  d0 = a0 + eps/2 + b0^2/(4 eta),
///   e0 = c0 + eta.
/// Then q >= l everywhere, q(zbar) <= l(zbar) + eps, and e0 > 0.
inline MajorizeResult majorize_cone_quadratic(const ConeQuadratic& l, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("majorize_cone_quadratic: eps must be positive");
    if (l.b0 < 0.0 || l.c0 < 0.0)
        throw std::invalid_argument("majorize_cone_quadratic: cone coefficients must be >= 0");
    MajorizeResult r;
    r.eta = std::max(l.b0 * l.b0 / (2.0 * eps), eps);
    r.q.d0 = l.a0 + eps / 2.0 + l.b0 * l.b0 / (4.0 * r.eta);
    r.q.e0 = l.c0 + r.eta;
    r.q.zbar = l.zbar;
    // (q - l)(r) = (d0 - a0) + eta r^2 - b0 r; the vertex r = b0 / (2 eta)
    // is admissible, so this is the global minimum over r >= 0.
    r.min_slack = (r.q.d0 - l.a0) - l.b0 * l.b0 / (4.0 * r.eta);
    return r;
}

enum class Verdict { pass, fail, inconclusive };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::pass: return "pass";
        case Verdict::fail: return "fail";
        default: return "inconclusive";
    }
}

struct SubharmonicReport {
    Verdict verdict = Verdict::inconclusive;
    double worst_min = std::numeric_limits<double>::infinity();
    bool tail_certified = false;
    int samples = 0;
    // witness of a negative value (filled on fail)
    double wt = 0.0;
    std::vector<double> wx, wy, wz;
    double wvalue = 0.0;
    std::string note;
};

struct SubharmonicOptions {
    int budget = 128;     // (t, x, y) samples
    double z_radius = 8.0; // search radius around the z hint
    double margin = 0.0;
    std::uint64_t seed = 1;
    int refine_starts = 3;
    int refine_iters = 120;
};

namespace detail {

/// Infimum of A r^2 + B r + C over [lo, hi] (hi may be +inf).
inline double min_quad(double A, double B, double C, double lo, double hi) {
    auto val = [&](double r) { return (A * r + B) * r + C; };
    double best = val(lo);
    if (std::isfinite(hi)) best = std::min(best, val(hi));
    else if (A < 0.0 || (A == 0.0 && B < 0.0))
        return -std::numeric_limits<double>::infinity();
    if (A > 0.0) {
        const double v = -B / (2.0 * A);
        if (v > lo && (!std::isfinite(hi) || v < hi)) best = std::min(best, val(v));
    }
    return best;
}

/// Envelope certificate for the region |z - c| > Rz at one sampled point.
/// The quadratic part of the operator is rebased at c exactly (writing
/// z = c + w keeps the cancellation between phi_{yy} c and phi_{xy} that the
/// explicit constructions are built around); only the driver term is bounded
/// adversarially through |f| <= M (1 + |y| + |z|^2). The result is one
/// quadratic in r = |w| whose infimum over [Rz, inf) must be nonnegative.
inline bool tail_certified(const Partials& P, std::span<const double> c, int n, int d,
                           double ynorm, double M, double Rz) {
    double lam;
    if (n == 1) lam = P.pyy[0];
    else lam = sym_eigenvalues(P.pyy, n).front();
    const double R0 = norm2(c);
    double P1 = 0.0;
    for (const double v : P.py) P1 += std::abs(v);

    // Q(z) = 1/2 sum pyy_{ii'} <z^i, z^i'> + sum pxy_{ji} z^i_j at z = c,
    // and the Frobenius norm of its gradient there.
    double Qc = 0.0;
    for (int i = 0; i < n; ++i)
        for (int i2 = 0; i2 < n; ++i2) {
            double cc = 0.0;
            for (int j = 0; j < d; ++j) cc += c[i * d + j] * c[i2 * d + j];
            Qc += 0.5 * P.pyy[static_cast<std::size_t>(i) * n + i2] * cc;
        }
    for (int j = 0; j < d; ++j)
        for (int i = 0; i < n; ++i) Qc += P.pxy[static_cast<std::size_t>(j) * n + i] * c[i * d + j];
    double Xc2 = 0.0;
    for (int i2 = 0; i2 < n; ++i2)
        for (int j = 0; j < d; ++j) {
            double g = P.pxy[static_cast<std::size_t>(j) * n + i2];
            for (int i = 0; i < n; ++i)
                g += P.pyy[static_cast<std::size_t>(i) * n + i2] * c[i * d + j];
            Xc2 += g * g;
        }
    const double Xc = std::sqrt(Xc2);

    double W = P.pt;
    for (int j = 0; j < d; ++j) W += 0.5 * P.pxx[j];

    const double A = 0.5 * lam - P1 * M;
    const double B = -Xc - 2.0 * P1 * M * R0;
    const double C0 = Qc + W - P1 * M * (1.0 + ynorm + R0 * R0);
    return min_quad(A, B, C0, Rz, std::numeric_limits<double>::infinity()) >= 0.0;
}

} // namespace detail

/// Sampling verdict on inf_z L phi >= 0 over dom phi. Interior minima come
/// from a coarse z grid plus multi-start descent; the region beyond the
/// search radius is covered by the envelope certificate. fail needs a
/// concrete witness; pass needs clean minima and a certified tail;
/// everything else is inconclusive.
inline SubharmonicReport is_subharmonic(const DriverSpec& f, const TestFunction& phi,
                                        const SubharmonicOptions& opt = {}) {
    if (phi.n != f.n || phi.d != f.d)
        throw std::invalid_argument("is_subharmonic: dimension mismatch");
    const int n = f.n, d = f.d, q = n * d;
    SubharmonicReport rep;
    rep.samples = opt.budget;
    rep.tail_certified = true;

    std::vector<double> zc(q, 0.0);
    if (!phi.z_center.empty()) {
        if (static_cast<int>(phi.z_center.size()) != q)
            throw std::invalid_argument("is_subharmonic: z_center has wrong size");
        zc = phi.z_center;
    }
    const CounterRng rng(opt.seed, kStreamDomain);
    const CounterRng zrng(opt.seed ^ 0x5851F42D4C957F2DULL, kStreamDomain);

    double t;
    std::vector<double> x, y, fv(n), z(q), zbest(q);
    bool all_clean = true;

    for (int s = 0; s < opt.budget; ++s) {
        phi.dom.sample(rng, static_cast<std::uint64_t>(s), t, x, y);
        if (t < 0.0) t = 0.0;
        if (t > f.T) t = f.T;
        const Partials P = partials_at(phi, t, x, y);

        auto Lz = [&](std::span<const double> zz) {
            f.eval(t, y, zz, fv);
            return detail::op_value(P, fv, zz, n, d);
        };

        // coarse grid around the hint
        double best = std::numeric_limits<double>::infinity();
        std::vector<std::pair<double, std::vector<double>>> starts;
        auto consider = [&](std::span<const double> zz) {
            const double v = Lz(zz);
            if (v < best) {
                best = v;
                zbest.assign(zz.begin(), zz.end());
            }
            starts.emplace_back(v, std::vector<double>(zz.begin(), zz.end()));
        };
        if (q == 1) {
            for (int k = -16; k <= 16; ++k) {
                z[0] = zc[0] + opt.z_radius * k / 16.0;
                consider(z);
            }
        } else if (q == 2) {
            for (int k1 = -6; k1 <= 6; ++k1)
                for (int k2 = -6; k2 <= 6; ++k2) {
                    z[0] = zc[0] + opt.z_radius * k1 / 6.0;
                    z[1] = zc[1] + opt.z_radius * k2 / 6.0;
                    consider(z);
                }
        } else {
            consider(zc);
            for (int k = 0; k < 96; ++k) {
                double nrm = 0.0;
                for (int c = 0; c < q; ++c) {
                    z[c] = zrng.gaussian(s, k + 2, c);
                    nrm += z[c] * z[c];
                }
                nrm = std::sqrt(std::max(nrm, 1e-300));
                const double rr =
                    opt.z_radius * std::pow(zrng.uniform(s, k + 2, 2 * q), 1.0 / q);
                for (int c = 0; c < q; ++c) z[c] = zc[c] + rr * z[c] / nrm;
                consider(z);
            }
        }
        std::sort(starts.begin(), starts.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        const int ns = std::min<int>(opt.refine_starts, static_cast<int>(starts.size()));
        for (int k = 0; k < ns; ++k) {
            const auto res = nelder_mead([&](std::span<const double> zz) { return Lz(zz); },
                                         starts[k].second, opt.z_radius / 8.0,
                                         opt.refine_iters);
            if (res.value < best) {
                best = res.value;
                zbest = res.x;
            }
        }

        const double tol = 1e-9 * (1.0 + std::abs(Lz(zc)));
        rep.worst_min = std::min(rep.worst_min, best);
        if (best < -(opt.margin + tol)) {
            rep.verdict = Verdict::fail;
            rep.wt = t;
            rep.wx = x;
            rep.wy = y;
            rep.wz = zbest;
            rep.wvalue = best;
            rep.note = "witness below -margin";
            return rep;
        }
        if (best < opt.margin - tol) all_clean = false;
        if (!detail::tail_certified(P, zc, n, d, norm2(y), f.M, opt.z_radius))
            rep.tail_certified = false;
    }

    if (all_clean && rep.tail_certified) {
        rep.verdict = Verdict::pass;
    } else {
        rep.verdict = Verdict::inconclusive;
        rep.note = rep.tail_certified ? "interior minimum inside the margin band"
                                      : "tail growth not certified from the envelope";
    }
    return rep;
}

/// Parameters of the explicit exponential construction around a base point.
/// The function itself is materialized by ansatz_function().
struct AnsatzParams {
    int n = 1, d = 1;
    double tbar = 0.0;
    std::vector<double> xbar, ybar, zbar; // zbar is n*d row-major
    int i0 = 0;
    int sign = 1;
    std::vector<double> beta;  // n entries, all 2 e0
    std::vector<double> gamma; // n*d, -2 e0 zbar
    double theta = 0.0;
    double r_dom = 0.0;
    /// C is the linear coefficient of the cone section the construction
    /// dominated, (d0, e0) the majorizing parabola, eps its apex error.
    double C = 0.0, d0 = 0.0, e0 = 0.0, eps = 0.0;
};

inline nlohmann::json to_json(const AnsatzParams& a) {
    nlohmann::json j;
    j["base"] = {{"t", a.tbar}, {"x", a.xbar}, {"y", a.ybar}, {"zbar", a.zbar}};
    j["i0"] = a.i0;
    j["sign"] = a.sign;
    j["beta"] = a.beta;
    j["gamma"] = a.gamma;
    j["theta"] = a.theta;
    j["r_dom"] = a.r_dom;
    j["C"] = a.C;
    j["d0"] = a.d0;
    j["e0"] = a.e0;
    j["eps"] = a.eps;
    j["n"] = a.n;
    j["d"] = a.d;
    return j;
}

inline AnsatzParams ansatz_from_json(const nlohmann::json& j) {
    AnsatzParams a;
    a.tbar = j.at("base").at("t").get<double>();
    a.xbar = j.at("base").at("x").get<std::vector<double>>();
    a.ybar = j.at("base").at("y").get<std::vector<double>>();
    a.zbar = j.at("base").at("zbar").get<std::vector<double>>();
    a.i0 = j.at("i0").get<int>();
    a.sign = j.at("sign").get<int>();
    a.beta = j.at("beta").get<std::vector<double>>();
    a.gamma = j.at("gamma").get<std::vector<double>>();
    a.theta = j.at("theta").get<double>();
    a.r_dom = j.at("r_dom").get<double>();
    a.C = j.at("C").get<double>();
    a.d0 = j.at("d0").get<double>();
    a.e0 = j.at("e0").get<double>();
    a.eps = j.at("eps").get<double>();
    a.n = j.at("n").get<int>();
    a.d = j.at("d").get<int>();
    return a;
}

/// phi(t, x, y) = -sum_{i != i0} y_i + sum_i E~_i / beta_i + theta |x|^2,
/// E~_i = exp(sigma_i (beta_i (y_i - ybar_i) + <gamma_i, x - xbar>)) with
/// sigma_{i0} = sign and sigma_i = +1 otherwise (the sign = -1 branch swaps
/// the i0 exponential for its reciprocal). Gradient at the base point is
/// exactly the i0 unit vector times sign.
inline TestFunction ansatz_function(const AnsatzParams& a) {
    for (const double b : a.beta)
        if (!(b > 0.0)) throw std::invalid_argument("ansatz_function: beta must be positive");
    if (a.i0 < 0 || a.i0 >= a.n) throw std::invalid_argument("ansatz_function: i0 out of range");
    if (a.sign != 1 && a.sign != -1)
        throw std::invalid_argument("ansatz_function: sign must be +1 or -1");

    TestFunction phi;
    phi.n = a.n;
    phi.d = a.d;
    std::ostringstream id;
    id << "ansatz(i0=" << a.i0 << ",s=" << a.sign << ",t=" << a.tbar << ")";
    phi.id = id.str();
    phi.dom = Domain::make_ball(a.tbar, a.xbar, a.ybar, a.r_dom);
    phi.z_center = a.zbar;

    const auto p = std::make_shared<AnsatzParams>(a);
    auto expo = [p](std::span<const double> x, std::span<const double> y, int i) {
        double arg = p->beta[i] * (y[i] - p->ybar[i]);
        for (int j = 0; j < p->d; ++j)
            arg += p->gamma[static_cast<std::size_t>(i) * p->d + j] * (x[j] - p->xbar[j]);
        const double sig = (i == p->i0) ? p->sign : 1.0;
        return std::exp(sig * arg);
    };

    phi.value = [p, expo](double, std::span<const double> x, std::span<const double> y) {
        double v = 0.0;
        for (int i = 0; i < p->n; ++i) {
            if (i != p->i0) v -= y[i];
            v += expo(x, y, i) / p->beta[i];
        }
        for (int j = 0; j < p->d; ++j) v += p->theta * x[j] * x[j];
        return v;
    };
    phi.dt = [](double, std::span<const double>, std::span<const double>) { return 0.0; };
    phi.dy = [p, expo](double, std::span<const double> x, std::span<const double> y, int i) {
        const double sig = (i == p->i0) ? p->sign : 1.0;
        return sig * expo(x, y, i) - (i != p->i0 ? 1.0 : 0.0);
    };
    phi.dyy = [p, expo](double, std::span<const double> x, std::span<const double> y, int i,
                        int i2) {
        if (i != i2) return 0.0;
        return p->beta[i] * expo(x, y, i);
    };
    phi.dxy = [p, expo](double, std::span<const double> x, std::span<const double> y, int j,
                        int i) {
        return p->gamma[static_cast<std::size_t>(i) * p->d + j] * expo(x, y, i);
    };
    phi.dxx = [p, expo](double, std::span<const double> x, std::span<const double> y, int j) {
        double v = 2.0 * p->theta;
        for (int i = 0; i < p->n; ++i) {
            const double g = p->gamma[static_cast<std::size_t>(i) * p->d + j];
            v += g * g / p->beta[i] * expo(x, y, i);
        }
        return v;
    };
    return phi;
}

struct ConstructOptions {
    /// z-search / envelope radius of the sampled certification used for
    /// systems (n >= 2); 0 = 2 (1 + |zbar|). Scalar equations are certified
    /// in closed form and ignore these knobs.
    double z_radius = 0.0;
    int budget = 96;
    int bisect_iters = 16;
    std::uint64_t seed = 7;
};

/// Explicit f-subharmonic candidate at a base point:
///   1. bound the driver increment at fixed y by a cone-quadratic section
///      l(u) = a0 + b0 u + c0 u^2 in u = |z - zbar|, a0 = sign * f^{i0}(base);
///      (b0, c0) come from the driver's declared z-slopes when present,
///      otherwise from the structural regularity inequality (sound for every
///      u >= 0 either way);
///   2. majorize l by q = (d0, e0) with apex error eps, then lift e0 to at
///      least 2M so the far-field curvature strictly dominates the growth
///      envelope of the driver class;
///   3. set beta = 2 e0, gamma = -2 e0 zbar, theta = d0 / d — the mixed
///      second-order terms of the operator then cancel exactly everywhere;
///   4. certify a domain radius. For n == 1 the operator identity
///         L^f phi = e0 E |z - zbar|^2 + d0 - E sign f,   E = exp-weight,
///      reduces nonnegativity on the radius-r ball to the closed-form
///      condition H(r) <= -slack (y-variation charged at the declared
///      yslope, time variation at a sampled modulus); for systems the
///      radius is bisected on the sampled check instead.
/// Throws when no positive radius can be certified.
inline AnsatzParams construct_subharmonic(const DriverSpec& f, double tbar,
                                          std::vector<double> xbar, std::vector<double> ybar,
                                          std::vector<double> zbar, int i0, int sign,
                                          double eps, double r_y,
                                          const ConstructOptions& opt = {}) {
    f.check();
    const int n = f.n, d = f.d;
    if (static_cast<int>(xbar.size()) != d || static_cast<int>(ybar.size()) != n ||
        static_cast<int>(zbar.size()) != n * d)
        throw std::invalid_argument("construct_subharmonic: base point has wrong dimensions");
    if (tbar < 0.0 || tbar > f.T)
        throw std::invalid_argument("construct_subharmonic: base time outside [0, T]");
    if (i0 < 0 || i0 >= n) throw std::invalid_argument("construct_subharmonic: i0 out of range");
    if (sign != 1 && sign != -1)
        throw std::invalid_argument("construct_subharmonic: sign must be +1 or -1");
    if (!(eps > 0.0) || !(r_y > 0.0))
        throw std::invalid_argument("construct_subharmonic: eps and r_y must be positive");

    const double znorm = norm2(zbar);
    const double Rz = opt.z_radius > 0.0 ? opt.z_radius : 2.0 * (1.0 + znorm);
    const double ynorm = norm2(ybar);

    std::vector<double> fbar(n), fv(n);
    f.eval(tbar, ybar, zbar, fbar);

    // sampled time-continuity modulus at the frozen (ybar, zbar)
    double omega_t = 0.0;
    for (int k = 0; k <= 32; ++k) {
        const double t = f.T * k / 32.0;
        f.eval(t, ybar, zbar, fv);
        double diff = 0.0;
        for (int i = 0; i < n; ++i) diff += (fv[i] - fbar[i]) * (fv[i] - fbar[i]);
        omega_t = std::max(omega_t, std::sqrt(diff));
    }

    // |f(t, ybar, z) - f(t, ybar, zbar)| <= b0 u + c0 u^2 for every u = |z - zbar|:
    // integrating the declared slope bound along the segment gives
    // (zslope0 + zslope1 |zbar|) u + (zslope1 / 2) u^2; without declared slopes
    // the regularity inequality gives M (1 + 2|ybar| + 2|zbar|) u + M u^2.
    double b0, c0;
    if (f.zslope0 >= 0.0 && f.zslope1 >= 0.0) {
        b0 = f.zslope0 + f.zslope1 * znorm;
        c0 = 0.5 * f.zslope1;
    } else {
        b0 = f.M * (1.0 + 2.0 * ynorm + 2.0 * znorm);
        c0 = f.M;
    }
    const double yslope = f.yslope >= 0.0 ? f.yslope : f.M;

    ConeQuadratic l{sign * fbar[i0], b0, c0, zbar};
    const MajorizeResult mj = majorize_cone_quadratic(l, eps);
    const double d0 = mj.q.d0;
    const double e0 = std::max(mj.q.e0, 2.0 * f.M);

    AnsatzParams a;
    a.n = n;
    a.d = d;
    a.tbar = tbar;
    a.xbar = std::move(xbar);
    a.ybar = std::move(ybar);
    a.zbar = std::move(zbar);
    a.i0 = i0;
    a.sign = sign;
    a.beta.assign(n, 2.0 * e0);
    a.gamma.resize(static_cast<std::size_t>(n) * d);
    for (int c = 0; c < n * d; ++c) a.gamma[c] = -2.0 * e0 * a.zbar[c];
    a.theta = d0 / d;
    a.C = b0;
    a.d0 = d0;
    a.e0 = e0;
    a.eps = eps;

    if (n == 1) {
        // On the radius-r ball the exponential weight E lies in
        // [e^{-kappa r}, e^{kappa r}] with kappa = |(beta, gamma)|, and
        //   L^f phi / E >= (e0 - c0) u^2 - b0 u - (a0 + yslope r + omega_t) + d0 / E,
        // so after minimizing over u >= 0 and over the ball, nonnegativity
        // holds whenever
        //   H(r) = a0 + yslope r + omega_t + b0^2 / (4 (e0 - c0)) - w(r) <= 0,
        // w(r) = d0 e^{-kappa r} (d0 >= 0) or d0 e^{kappa r} (d0 < 0).
        // H is increasing with H(0) <= omega_t - eps / 2, so the certified
        // radius comes from bisection against a fixed slack.
        double kap2 = 0.0;
        for (const double b : a.beta) kap2 += b * b;
        for (const double g : a.gamma) kap2 += g * g;
        const double kappa = std::sqrt(kap2);
        const double a0 = sign * fbar[i0];
        const double apex = b0 * b0 / (4.0 * (e0 - c0));
        const double slack = 0.05 * eps;
        const auto H = [&](double r) {
            const double w = d0 >= 0.0 ? d0 * std::exp(-kappa * r) : d0 * std::exp(kappa * r);
            return a0 + yslope * r + omega_t + apex - w;
        };
        if (H(0.0) > -slack)
            throw std::runtime_error("construct_subharmonic: no certifiable domain radius for " +
                                     f.label);
        if (H(r_y) <= -slack) {
            a.r_dom = r_y;
        } else {
            double lo = 0.0, hi = r_y;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                (H(mid) <= -slack ? lo : hi) = mid;
            }
            a.r_dom = lo;
        }
        return a;
    }

    // Systems: no closed form across components, certify by sampled search.
    SubharmonicOptions sopt;
    sopt.budget = opt.budget;
    sopt.z_radius = Rz;
    sopt.seed = opt.seed;
    auto passes = [&](double r) {
        AnsatzParams trial = a;
        trial.r_dom = r;
        return is_subharmonic(f, ansatz_function(trial), sopt).verdict == Verdict::pass;
    };

    double best = 0.0;
    if (passes(r_y)) {
        best = r_y;
    } else {
        double lo = 0.0, hi = r_y;
        for (int it = 0; it < opt.bisect_iters; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (passes(mid)) {
                best = mid;
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }
    if (best <= 0.0)
        throw std::runtime_error("construct_subharmonic: no certifiable domain radius for " +
                                 f.label);
    a.r_dom = best;
    return a;
}

struct ExpTestFunction {
    TestFunction phi;
    double C1 = 0.0, C2 = 0.0;
};

/// phi(t, x, y) = e^{sigma C1 y} + C2 |x|^2 with C1 = 2M and
/// C2 = C1 M (1 + ybound) e^{C1 ybound} / d. At C1 = 2M the |z|^2 terms of
/// the envelope cancel exactly, so the operator stays nonnegative on
/// |y| <= ybound for every driver with constant M, for either sigma = +1/-1.
inline ExpTestFunction exp_test_function(double M, double ybound, int d, int sigma,
                                         double T = 1.0, double xbox = 10.0) {
    if (!(M > 0.0) || !(ybound > 0.0) || d < 1)
        throw std::invalid_argument("exp_test_function: bad parameters");
    if (sigma != 1 && sigma != -1)
        throw std::invalid_argument("exp_test_function: sigma must be +1 or -1");
    ExpTestFunction out;
    out.C1 = 2.0 * M;
    out.C2 = out.C1 * M * (1.0 + ybound) * std::exp(out.C1 * ybound) / d;
    const double C1 = out.C1, C2 = out.C2, sg = sigma;

    TestFunction phi;
    phi.n = 1;
    phi.d = d;
    std::ostringstream id;
    id << "exp_bound(sigma=" << sigma << ",M=" << M << ")";
    phi.id = id.str();
    phi.dom = Domain::make_box(0.0, T, std::vector<double>(d, -xbox),
                               std::vector<double>(d, xbox), {-ybound}, {ybound});
    phi.value = [C1, C2, sg](double, std::span<const double> x, std::span<const double> y) {
        double v = std::exp(sg * C1 * y[0]);
        for (const double xj : x) v += C2 * xj * xj;
        return v;
    };
    phi.dt = [](double, std::span<const double>, std::span<const double>) { return 0.0; };
    phi.dy = [C1, sg](double, std::span<const double>, std::span<const double> y, int) {
        return sg * C1 * std::exp(sg * C1 * y[0]);
    };
    phi.dyy = [C1, sg](double, std::span<const double>, std::span<const double> y, int, int) {
        return C1 * C1 * std::exp(sg * C1 * y[0]);
    };
    phi.dxy = [](double, std::span<const double>, std::span<const double>, int, int) {
        return 0.0;
    };
    phi.dxx = [C2](double, std::span<const double>, std::span<const double>, int) {
        return 2.0 * C2;
    };
    out.phi = phi;
    return out;
}

} // namespace qbsde
