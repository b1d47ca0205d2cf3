#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace qbsde {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Euclidean norm; doubles as the Frobenius norm for flat matrix storage.
inline double norm2(std::span<const double> a) {
    return std::sqrt(dot(a, a));
}

/// Eigenvalues of a symmetric n x n matrix (row-major), ascending.
/// Cyclic Jacobi; intended for the small matrices of the operator calculus.
inline std::vector<double> sym_eigenvalues(std::vector<double> a, int n) {
    if (n <= 0 || static_cast<int>(a.size()) != n * n)
        throw std::invalid_argument("sym_eigenvalues: bad dimensions");
    auto at = [&](int r, int c) -> double& { return a[static_cast<std::size_t>(r) * n + c]; };
    for (int sweep = 0; sweep < 64; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
        if (off < 1e-30) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = at(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (int i = 0; i < n; ++i) ev[i] = at(i, i);
    std::sort(ev.begin(), ev.end());
    return ev;
}

struct MinimizeResult {
    std::vector<double> x;
    double value = 0.0;
    int evals = 0;
};

/// Derivative-free Nelder-Mead descent. Good enough to polish grid minima;
/// callers keep their own global search.
inline MinimizeResult nelder_mead(const std::function<double(std::span<const double>)>& f,
                                  std::span<const double> x0, double step,
                                  int max_iter = 200, double ftol = 1e-12) {
    const int n = static_cast<int>(x0.size());
    int evals = 0;
    auto eval = [&](const std::vector<double>& x) {
        ++evals;
        return f(x);
    };
    std::vector<std::vector<double>> pts(n + 1, std::vector<double>(x0.begin(), x0.end()));
    std::vector<double> fv(n + 1);
    for (int i = 1; i <= n; ++i) pts[i][i - 1] += step;
    for (int i = 0; i <= n; ++i) fv[i] = eval(pts[i]);

    std::vector<int> order(n + 1);
    std::vector<double> centroid(n), cand(n), cand2(n);
    for (int it = 0; it < max_iter; ++it) {
        for (int i = 0; i <= n; ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        const int best = order[0], worst = order[n], second = order[n - 1];
        if (std::abs(fv[worst] - fv[best]) <= ftol * (1.0 + std::abs(fv[best]))) break;

        std::fill(centroid.begin(), centroid.end(), 0.0);
        for (int i = 0; i <= n; ++i)
            if (i != worst)
                for (int k = 0; k < n; ++k) centroid[k] += pts[i][k] / n;

        for (int k = 0; k < n; ++k) cand[k] = centroid[k] + (centroid[k] - pts[worst][k]);
        double fr = eval(cand);
        if (fr < fv[best]) {
            for (int k = 0; k < n; ++k) cand2[k] = centroid[k] + 2.0 * (centroid[k] - pts[worst][k]);
            const double fe = eval(cand2);
            if (fe < fr) { pts[worst] = cand2; fv[worst] = fe; }
            else         { pts[worst] = cand;  fv[worst] = fr; }
        } else if (fr < fv[second]) {
            pts[worst] = cand; fv[worst] = fr;
        } else {
            for (int k = 0; k < n; ++k) cand2[k] = centroid[k] + 0.5 * (pts[worst][k] - centroid[k]);
            const double fc = eval(cand2);
            if (fc < fv[worst]) { pts[worst] = cand2; fv[worst] = fc; }
            else {
                for (int i = 0; i <= n; ++i) {
                    if (i == best) continue;
                    for (int k = 0; k < n; ++k)
                        pts[i][k] = pts[best][k] + 0.5 * (pts[i][k] - pts[best][k]);
                    fv[i] = eval(pts[i]);
                }
            }
        }
    }
    int best = 0;
    for (int i = 1; i <= n; ++i)
        if (fv[i] < fv[best]) best = i;
    return MinimizeResult{pts[best], fv[best], evals};
}

} // namespace qbsde
