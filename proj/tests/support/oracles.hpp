// Reference values for the test suite, computed independently of the library
// under test. Only <cmath> numerics: Gauss-Hermite quadrature built from the
// three-term Hermite recurrence with Newton root polishing, plus the closed
// forms it feeds (discounted expectations and the exponential change of
// variable for the purely quadratic driver).
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracles {

struct Quadrature {
    std::vector<double> x, w; // nodes and weights for weight exp(-x^2)
};

/// Physicists' Gauss-Hermite rule. Nodes are the roots of H_n, found by
/// Newton iteration on the orthonormal recurrence (stable for n in the
/// hundreds); weights come from the derivative at the root.
inline Quadrature gauss_hermite(int n) {
    if (n < 2) throw std::invalid_argument("gauss_hermite: need n >= 2");
    Quadrature q;
    q.x.assign(n, 0.0);
    q.w.assign(n, 0.0);
    const double pim4 = 0.751125544464942483; // pi^{-1/4}
    const int half = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < half; ++i) {
        // Asymptotic initial guesses, largest root first.
        if (i == 0) {
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
        } else if (i == 1) {
            z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
        } else if (i == 2) {
            z = 1.86 * z - 0.86 * q.x[0];
        } else if (i == 3) {
            z = 1.91 * z - 0.91 * q.x[1];
        } else {
            z = 2.0 * z - q.x[i - 2];
        }
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = pim4, p2 = 0.0;
            for (int j = 0; j < n; ++j) {
                const double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / (j + 1)) * p2 -
                     std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            const double dz = p1 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15 * (1.0 + std::abs(z))) break;
        }
        q.x[i] = z;
        q.x[n - 1 - i] = -z;
        q.w[i] = 2.0 / (pp * pp);
        q.w[n - 1 - i] = q.w[i];
    }
    return q;
}

/// E[g(X)] for X ~ N(mean, var). The 128-point default matches a 192-point
/// rule to ~1e-11 on the bounded smooth payoffs used here; the initial
/// guesses are tuned for n up to about 200.
inline double gaussian_expectation(const std::function<double(double)>& g, double mean,
                                   double var, int nodes = 128) {
    const Quadrature q = gauss_hermite(nodes);
    const double s = std::sqrt(2.0 * var);
    double acc = 0.0;
    for (int i = 0; i < nodes; ++i) acc += q.w[i] * g(mean + s * q.x[i]);
    return acc / std::sqrt(M_PI);
}

/// Value at (0, x) for dY = -a Y dt + Z dB, Y_T = h(B_T):
/// the exponential discount moves to the front, Y = e^{aT} E[h(x + B_T)].
inline double linear_value(const std::function<double(double)>& h, double alpha, double T,
                           double x) {
    return std::exp(alpha * T) * gaussian_expectation(h, x, T);
}

/// Value at (0, x) for dY = -(g/2) |Z|^2 dt + Z dB, Y_T = h(B_T):
/// e^{g Y} is a martingale, so Y = (1/g) log E[e^{g h(x + B_T)}].
inline double quadratic_value(const std::function<double(double)>& h, double gamma, double T,
                              double x) {
    const double e = gaussian_expectation(
        [&](double v) { return std::exp(gamma * h(v)); }, x, T);
    return std::log(e) / gamma;
}

/// Heat-equation value at (0, x) for h(b) = b^2: E[(x + B_T)^2] = x^2 + T.
inline double heat_square_value(double T, double x) { return x * x + T; }

} // namespace oracles
