#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qbsde/driver.hpp"
#include "qbsde/forward.hpp"
#include "qbsde/martingale.hpp"
#include "qbsde/paths.hpp"
#include "qbsde/subharmonic.hpp"
#include "qbsde/terminal.hpp"

namespace qbsde {

/// Named benchmark setups with closed-form (or independently computable)
/// start values, used by tests and the demo commands.
struct Benchmark {
    std::string name;
    DriverSpec f;
    TerminalCondition h;
};

inline Benchmark make_benchmark(const std::string& name) {
    Benchmark b;
    b.name = name;
    if (name == "heat") {
        b.f = make_driver("zero");
        b.h = make_terminal("square");
    } else if (name == "linear") {
        b.f = make_driver("linear:alpha=0.5");
        b.h = make_terminal("tanh");
    } else if (name == "quadratic") {
        b.f = make_driver("quadratic:gamma=1");
        b.h = make_terminal("tanh");
    } else {
        throw std::invalid_argument("unknown benchmark: '" + name + "'");
    }
    return b;
}

/// Pathwise pair Y = t + B, Z = 1 for the driver f(z) = -z; satisfies the
/// one-step identity exactly (residual 0).
inline ItoProcess make_true_candidate(const PathEnsemble& ens) {
    if (ens.d != 1) throw std::invalid_argument("make_true_candidate: d = 1 only");
    ItoProcess proc;
    proc.paths = &ens;
    const int m = ens.grid.m;
    proc.y.resize(static_cast<std::size_t>(ens.N) * (m + 1));
    proc.z.assign(proc.y.size(), 1.0);
    proc.g.assign(proc.y.size(), -1.0);
    for (int p = 0; p < ens.N; ++p)
        for (int i = 0; i <= m; ++i)
            proc.y[proc.yidx(p, i)] = ens.grid.t(i) + ens.bval(p, i, 0);
    return proc;
}

/// Lookalike pair Y' = t + int sign(B) dB, Z' = sign(B) for the same driver.
/// Y'_T matches the true terminal value in law (the sign-integral is again a
/// Brownian motion), but the pair does not solve the equation.
inline ItoProcess make_wrong_candidate(const PathEnsemble& ens) {
    if (ens.d != 1) throw std::invalid_argument("make_wrong_candidate: d = 1 only");
    ItoProcess proc;
    proc.paths = &ens;
    const int m = ens.grid.m;
    const double dt = ens.grid.dt();
    proc.y.resize(static_cast<std::size_t>(ens.N) * (m + 1));
    proc.z.resize(proc.y.size());
    proc.g.resize(proc.y.size());
    for (int p = 0; p < ens.N; ++p) {
        double y = 0.0;
        for (int i = 0; i <= m; ++i) {
            const double s = ens.bval(p, i, 0) < 0.0 ? -1.0 : 1.0;
            proc.y[proc.yidx(p, i)] = y;
            proc.z[proc.zidx(p, i)] = s;
            proc.g[proc.yidx(p, i)] = -s;
            if (i < m) y += dt + s * (ens.bval(p, i + 1, 0) - ens.bval(p, i, 0));
        }
    }
    return proc;
}

/// Exponential detector e^{lambda t + a y + b x} on a wide box. For the
/// driver f(z) = -z these are f-subharmonic exactly when
/// lambda + b^2/2 - (1 + b)^2/2 >= 0; the frozen family sits on or above
/// that line, so a true solution can never trip them, while the lookalike
/// pair produces drift -2 phi wherever sign(B) disagrees with the slope the
/// detector expects.
inline TestFunction exp_detector(double a, double b, double lambda, double box = 8.0,
                                 double T = 1.0) {
    TestFunction phi;
    phi.n = 1;
    phi.d = 1;
    std::ostringstream id;
    id << "exp_detector(a=" << a << ",b=" << b << ",l=" << lambda << ")";
    phi.id = id.str();
    phi.dom = Domain::make_box(0.0, T, {-box}, {box}, {-box}, {box});
    phi.z_center = {1.0};
    auto val = [a, b, lambda](double t, std::span<const double> x, std::span<const double> y) {
        return std::exp(lambda * t + a * y[0] + b * x[0]);
    };
    phi.value = val;
    phi.dt = [val, lambda](double t, std::span<const double> x, std::span<const double> y) {
        return lambda * val(t, x, y);
    };
    phi.dy = [val, a](double t, std::span<const double> x, std::span<const double> y, int) {
        return a * val(t, x, y);
    };
    phi.dyy = [val, a](double t, std::span<const double> x, std::span<const double> y, int,
                       int) { return a * a * val(t, x, y); };
    phi.dxy = [val, a, b](double t, std::span<const double> x, std::span<const double> y, int,
                          int) { return a * b * val(t, x, y); };
    phi.dxx = [val, b](double t, std::span<const double> x, std::span<const double> y, int) {
        return b * b * val(t, x, y);
    };
    return phi;
}

/// Frozen detector family for the lookalike experiment. The first two are
/// exactly critical and sign-selective (drift -2 phi on half the state
/// space for the wrong pair, +2 phi for the true one); the last two are
/// x-blind controls with a 0.2 phi drift buffer, so they stay quiet on both.
inline std::vector<TestFunction> counterexample_detectors(double T = 1.0) {
    return {
        exp_detector(-1.0, -2.0, -1.5, 8.0, T),
        exp_detector(-2.0, -1.0, -0.5, 8.0, T),
        exp_detector(1.0, 0.0, 0.7, 8.0, T),
        exp_detector(-1.0, 0.0, 0.7, 8.0, T),
    };
}

struct CounterexampleRun {
    std::vector<MartingaleTest> on_true, on_wrong;
    bool true_clean = false;   // no detector rejects the genuine pair
    bool wrong_flagged = false; // at least one detector rejects the lookalike
    double residual_true = 0.0, residual_wrong = 0.0;
};

/// One full detection experiment at the given sample size.
inline CounterexampleRun run_counterexample(std::uint64_t seed, int N = 100000, int m = 200,
                                            int threads = 0) {
    const PathEnsemble ens = simulate_bm(TimeGrid{1.0, m}, N, 1, seed, threads);
    const ItoProcess truth = make_true_candidate(ens);
    const ItoProcess fake = make_wrong_candidate(ens);

    CounterexampleRun run;
    run.true_clean = true;
    for (const TestFunction& phi : counterexample_detectors()) {
        run.on_true.push_back(f_martingale_test(phi, truth, {}, threads));
        run.on_wrong.push_back(f_martingale_test(phi, fake, {}, threads));
        if (run.on_true.back().verdict == Verdict::fail) run.true_clean = false;
        if (run.on_wrong.back().verdict == Verdict::fail) run.wrong_flagged = true;
    }
    run.residual_true = bsde_residual(truth, threads);
    run.residual_wrong = bsde_residual(fake, threads);
    return run;
}

} // namespace qbsde
