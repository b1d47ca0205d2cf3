// Acceptance gate: ten end-to-end checks against closed-form values and
// structural guarantees. Prints exactly one [PASS]/[FAIL] line per check and
// exits nonzero if any fails. Every tolerance is pinned by name below.
#include <qbsde/qbsde.hpp>

#include "support/oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

using namespace qbsde;

namespace {

// ---- pinned tolerances, bounds and budgets ---------------------------------
constexpr double kHeatTol = 1e-2;          // |y0 - E[B_1^2]|
constexpr double kLinearTol = 1e-2;        // |y0 - e^{aT} E[h(B_T)]| and surface spot check
constexpr double kOracleSelfTol = 1e-12;   // frozen literals vs live 128-node quadrature
constexpr double kQuadraticTol = 2e-2;     // |y0 - ln E[e^{h(B_T)}]|
constexpr double kFinalGapTol = 1e-2;      // E|X_T - xi|^2 at the last sweep level
constexpr double kGradExactTol = 1e-14;    // base-point gradient of a constructed function
constexpr double kBaseValueTol = 1e-12;    // eval_Lf(base; zbar) inside [0, eps]
constexpr double kApexTol = 1e-12;         // majorization apex error and global-min guard
constexpr double kHTol = 1e-10;            // quadratic-form vs operator identity
constexpr double kResidualTol = 1e-25;     // one-step residual of the exact pair
constexpr double kCoupleRatioBound = 2.5;  // frozen family bound on sp / E int (1-rho) dt
constexpr double kBmoSpreadTol = 0.10;     // relative bmo variation across levels

// frozen 128-node Gauss-Hermite values; re-derived live on every run
constexpr double kLinearAtHalf = 0.48711944288475645;   // e^{1/2} E[tanh(1/2 + B_1)]
constexpr double kQuadraticAtZero = 0.18892605897049247; // ln E[exp(tanh(B_1))]

struct Outcome {
    bool ok = false;
    std::string detail;
};

bool g_all_ok = true;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

/// One line per criterion; a time budget of 0 means "not limited".
void report(int idx, const char* name, const Outcome& out, double elapsed, double limit_s) {
    const bool within = limit_s <= 0.0 || elapsed <= limit_s;
    const bool ok = out.ok && within;
    g_all_ok = g_all_ok && ok;
    std::printf("[%s] C%d %s (%.1fs)%s%s%s\n", ok ? "PASS" : "FAIL", idx, name, elapsed,
                out.detail.empty() ? "" : " ", out.detail.c_str(),
                within ? "" : " [over time budget]");
    std::fflush(stdout);
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

// ---- C1: heat-equation value ------------------------------------------------
Outcome c1_heat() {
    PipelineOptions opt;
    opt.N = 20000;
    opt.grid = TimeGrid{1.0, 200};
    opt.dx = 0.02;
    opt.L = 8.0;
    const PipelineReport rep =
        kobylanski_pipeline(make_driver("zero"), make_terminal("square"), opt);
    const double err = std::abs(rep.y0_limit - 1.0);
    return {err <= kHeatTol, "y0=" + fmt(rep.y0_limit) + " err=" + fmt(err)};
}

// ---- C2: linear driver vs quadrature ---------------------------------------
Outcome c2_linear() {
    PipelineOptions opt;
    opt.N = 20000;
    opt.grid = TimeGrid{1.0, 200};
    opt.keep_process = true; // the report only carries the surface when asked
    const PipelineReport rep =
        kobylanski_pipeline(make_driver("linear:alpha=0.5"), make_terminal("tanh"), opt);

    const auto h = [](double v) { return std::tanh(v); };
    const double live0 = oracles::linear_value(h, 0.5, 1.0, 0.0);
    const double live_half = oracles::linear_value(h, 0.5, 1.0, 0.5);
    const double u_half = rep.last_grid.interp_u(0, 0.5);

    Outcome out;
    out.ok = std::abs(live_half - kLinearAtHalf) <= kOracleSelfTol &&
             std::abs(rep.y0_limit - live0) <= kLinearTol &&
             std::abs(u_half - kLinearAtHalf) <= kLinearTol;
    out.detail = "y0=" + fmt(rep.y0_limit) + " u(0,1/2)=" + fmt(u_half) +
                 " oracle=" + fmt(kLinearAtHalf);
    return out;
}

// ---- C3 + C9 share one full-size sweep --------------------------------------
struct QuadSweep {
    PipelineReport rep;
    double elapsed = 0.0;
};

const QuadSweep& quad_sweep() {
    static const QuadSweep qs = [] {
        const auto t0 = std::chrono::steady_clock::now();
        PipelineOptions opt;
        opt.N = 100000;
        opt.grid = TimeGrid{1.0, 200};
        opt.schedule = {1.0, 2.0, 4.0, 8.0, 16.0};
        QuadSweep out;
        out.rep = kobylanski_pipeline(make_driver("quadratic:gamma=1"), make_terminal("tanh"),
                                      opt);
        out.elapsed = seconds_since(t0);
        return out;
    }();
    return qs;
}

Outcome c3_quadratic() {
    const PipelineReport& rep = quad_sweep().rep;

    const auto h = [](double v) { return std::tanh(v); };
    const double live = oracles::quadratic_value(h, 1.0, 1.0, 0.0);

    bool gaps_ok = true;
    for (std::size_t i = 1; i < 4 && i < rep.rows.size(); ++i) {
        const double allowance = 2.0 * (rep.rows[i].gap_se + rep.rows[i - 1].gap_se);
        if (rep.rows[i].gap_p2 > rep.rows[i - 1].gap_p2 + allowance) gaps_ok = false;
    }
    const double final_gap = rep.rows.size() >= 4 ? rep.rows[3].gap_p2 : 1e300;
    const double err = std::abs(rep.y0_limit - kQuadraticAtZero);

    Outcome out;
    out.ok = std::abs(live - kQuadraticAtZero) <= kOracleSelfTol && rep.rows.size() == 5 &&
             err <= kQuadraticTol && gaps_ok && final_gap < kFinalGapTol;
    out.detail = "y0=" + fmt(rep.y0_limit) + " err=" + fmt(err) + " gap=" + fmt(final_gap);
    return out;
}

// ---- C4: constructed functions are certified, gradient-exact ----------------
Outcome c4_construct() {
    const char* labels[3] = {"quadratic:gamma=1", "zlinear:c=-1", "linear:alpha=0.5"};
    const CounterRng rng(424242, kStreamValidate);
    const double eps = 0.5, r_y = 1.0;
    double min_rdom = 1e300, worst_base = -1e300;
    for (int s = 0; s < 50; ++s) {
        const DriverSpec f = make_driver(labels[s % 3]);
        const double tb = 0.9 * rng.uniform(s, 0, 0);
        const double xb = -2.0 + 4.0 * rng.uniform(s, 0, 1);
        const double yb = -1.0 + 2.0 * rng.uniform(s, 0, 2);
        const double zb = -1.5 + 3.0 * rng.uniform(s, 0, 3);
        const int sign = rng.uniform(s, 0, 4) < 0.5 ? 1 : -1;

        const AnsatzParams a =
            construct_subharmonic(f, tb, {xb}, {yb}, {zb}, 0, sign, eps, r_y);
        if (!(a.r_dom > 0.0)) return {false, "r_dom=0 at sample " + std::to_string(s)};
        min_rdom = std::min(min_rdom, a.r_dom);

        const TestFunction phi = ansatz_function(a);
        const Partials P = partials_at(phi, tb, std::span<const double>(&xb, 1),
                                       std::span<const double>(&yb, 1));
        if (std::abs(P.py[0] - sign) > kGradExactTol)
            return {false, "gradient off at sample " + std::to_string(s)};

        const double base_val =
            eval_Lf(f, phi, tb, std::span<const double>(&xb, 1),
                    std::span<const double>(&yb, 1), std::span<const double>(&zb, 1));
        if (base_val < -kBaseValueTol || base_val > eps + kBaseValueTol)
            return {false, "base value " + fmt(base_val) + " outside [0, eps] at sample " +
                               std::to_string(s)};
        worst_base = std::max(worst_base, base_val);

        const SubharmonicReport rep = is_subharmonic(f, phi);
        if (rep.verdict != Verdict::pass)
            return {false, std::string("re-check not clean at sample ") + std::to_string(s) +
                               " (" + labels[s % 3] + "): " + rep.note};
    }
    return {true, "50 bases, min r_dom=" + fmt(min_rdom) + " max base value=" + fmt(worst_base)};
}

// ---- C5: majorization dominance in closed form ------------------------------
Outcome c5_majorize() {
    const CounterRng rng(99, kStreamValidate);
    double worst_min = 1e300, worst_apex = -1e300;
    for (int trial = 0; trial < 1000; ++trial) {
        const double a0 = -3.0 + 6.0 * rng.uniform(trial, 0, 0);
        const double b0 = 3.0 * rng.uniform(trial, 0, 1);
        const double c0 = 3.0 * rng.uniform(trial, 0, 2);
        const double eps = 0.05 + rng.uniform(trial, 0, 3);
        const MajorizeResult r = majorize_cone_quadratic({a0, b0, c0, {0.0}}, eps);

        if (!(r.q.e0 > 0.0)) return {false, "e0 <= 0 at trial " + std::to_string(trial)};
        const double curv = r.q.e0 - c0; // positive curvature of q - l
        if (!(curv > 0.0)) return {false, "q - l not coercive at trial " + std::to_string(trial)};

        // global minimum of q - l over r >= 0, independently of the library:
        // vertex at b0 / (2 curv) >= 0, value (d0 - a0) - b0^2 / (4 curv)
        const double gmin = (r.q.d0 - a0) - b0 * b0 / (4.0 * curv);
        const double apex = r.q.d0 - a0;
        worst_min = std::min(worst_min, gmin);
        worst_apex = std::max(worst_apex, apex - eps);
        if (gmin < -kApexTol || apex > eps + kApexTol)
            return {false, "dominance broken at trial " + std::to_string(trial) +
                               " gmin=" + fmt(gmin) + " apex_err=" + fmt(apex - eps)};
    }
    return {true, "1000 sections, min slack=" + fmt(worst_min) +
                      " worst apex excess=" + fmt(worst_apex)};
}

// ---- C6: quadratic form in (|z|, z/|z|) equals the operator ------------------
Outcome c6_hmatrix() {
    const CounterRng rng(7, kStreamValidate);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const int d = 1 + trial % 3;
        const DriverSpec f0 = make_driver("zero:d=" + std::to_string(d));

        const double a = rng.gaussian(trial, 0, 0);
        const double b = rng.gaussian(trial, 0, 1);
        const double c = rng.gaussian(trial, 0, 2);
        TestFunction phi;
        phi.n = 1;
        phi.d = d;
        phi.id = "smooth";
        phi.dom = Domain::make_box(0.0, 1.0, std::vector<double>(d, -6.0),
                                   std::vector<double>(d, 6.0), {-6.0}, {6.0});
        phi.value = [a, b, c](double, std::span<const double> x, std::span<const double> y) {
            double s = 0.0;
            for (const double xj : x) s += xj;
            return a * std::sin(s + c * y[0]) + b * y[0] * y[0] * std::cos(x[0]);
        };

        const double t = rng.uniform(trial, 1, 0);
        std::vector<double> x(d), z(d);
        const double yv = rng.gaussian(trial, 1, 1);
        double zz = 0.0;
        for (int j = 0; j < d; ++j) {
            x[j] = rng.gaussian(trial, 2, j);
            z[j] = 2.0 * rng.gaussian(trial, 3, j);
            zz += z[j] * z[j];
        }
        if (zz <= 1e-8) z[0] = 1.0, zz = 1.0; // the form needs |z| > 0

        const std::vector<double> H =
            build_H(phi, t, x, std::span<const double>(&yv, 1));
        double cross = 0.0;
        for (int j = 0; j < d; ++j) cross += H[static_cast<std::size_t>(1 + j)] * z[j];
        const double lap = H[static_cast<std::size_t>(d + 1) + 1]; // any diagonal block entry
        const double quad = 0.5 * (H[0] * zz + 2.0 * cross + lap);

        const double op = eval_Lf(f0, phi, t, x, std::span<const double>(&yv, 1), z);
        const double err = std::abs(quad - op) / (1.0 + std::abs(op));
        worst = std::max(worst, err);
        if (err > kHTol)
            return {false, "identity off by " + fmt(err) + " at trial " + std::to_string(trial)};
    }
    return {true, "100 functions, worst relative gap=" + fmt(worst)};
}

// ---- C7: drift tests on the solved process; lookalike detection --------------
Outcome c7_drift() {
    // certified functions anchored on the solved cloud must show no negative drift
    PipelineOptions opt;
    opt.N = 20000;
    opt.grid = TimeGrid{1.0, 200};
    opt.schedule = {16.0};
    opt.keep_process = true;
    const PipelineReport rep =
        kobylanski_pipeline(make_driver("quadratic:gamma=1"), make_terminal("tanh"), opt);
    const std::vector<AnsatzPick> picks =
        auto_ansatz_family(make_driver("quadratic:gamma=1"), rep.last_process, 20);
    double worst_t = 1e300;
    for (const AnsatzPick& pick : picks) {
        const MartingaleTest mt = f_martingale_test(pick.phi, rep.last_process);
        if (mt.verdict != Verdict::pass)
            return {false, "drift test not clean for " + mt.phi_id + " mu=" +
                               fmt(mt.drift.mu_hat) + " se=" + fmt(mt.drift.se)};
        worst_t = std::min(worst_t, mt.drift.se > 0.0 ? mt.drift.mu_hat / mt.drift.se : 1e300);
    }

    // the lookalike pair must be separated by x-aware detectors only
    int good_reps = 0;
    double worst_residual = 0.0;
    const int reps = 20;
    for (int i = 0; i < reps; ++i) {
        const CounterexampleRun run = run_counterexample(1000 + i, 100000, 200);
        const bool xdep_flagged = run.on_wrong[0].verdict == Verdict::fail ||
                                  run.on_wrong[1].verdict == Verdict::fail;
        const bool xblind_quiet = run.on_wrong[2].verdict != Verdict::fail &&
                                  run.on_wrong[3].verdict != Verdict::fail;
        if (run.true_clean && xdep_flagged && xblind_quiet) ++good_reps;
        worst_residual = std::max(worst_residual, run.residual_true);
    }

    Outcome out;
    out.ok = good_reps >= 19 && worst_residual < kResidualTol;
    out.detail = "20 certified functions clean (worst t=" + fmt(worst_t) + "), detections " +
                 std::to_string(good_reps) + "/20, residual=" + fmt(worst_residual);
    return out;
}

// ---- C8: coupled motions -----------------------------------------------------
Outcome c8_coupling() {
    const DriverSpec f = make_driver("quadratic:gamma=1");
    const TerminalCondition h = make_terminal("tanh");
    CoupleOptions opt;
    opt.N = 20000;

    const std::vector<double> rhos{0.0, 0.5, 0.9, 0.99, 1.0};
    std::vector<CoupleResult> res;
    for (const double r : rhos)
        res.push_back(couple_solutions(f, h, LocalCorrelation::make_constant(r), opt));

    bool decreasing = true;
    for (std::size_t i = 1; i < res.size(); ++i) {
        const double drop = res[i - 1].lhs - res[i].lhs;
        if (drop <= 2.0 * (res[i - 1].lhs_se + res[i].lhs_se)) decreasing = false;
    }
    const bool exact_zero = res.back().lhs == 0.0 && res.back().sp == 0.0;

    bool ratio_ok = true;
    double worst_ratio = 0.0;
    for (std::size_t i = 0; i + 1 < res.size(); ++i) { // rho = 1 is degenerate by design
        if (res[i].degenerate || res[i].ratio_p2 > kCoupleRatioBound + 2.0 * res[i].ratio_se)
            ratio_ok = false;
        worst_ratio = std::max(worst_ratio, res[i].ratio_p2);
    }

    // threshold rule on the Lipschitz-terminal heat case: |Z| never crosses
    // the barrier, so the switching probability must vanish identically
    const DriverSpec f0 = make_driver("zero");
    bool tails_ok = true;
    double prev_tail = 1e300;
    for (const double eps : {1.0, 0.5, 0.25}) {
        const CoupleResult tr = couple_solutions(f0, h, LocalCorrelation::make_threshold(eps), opt);
        if (!tr.tail_prob.has_value() || *tr.tail_prob != 0.0 || *tr.tail_prob > prev_tail)
            tails_ok = false;
        prev_tail = *tr.tail_prob;
    }

    Outcome out;
    out.ok = decreasing && exact_zero && ratio_ok && tails_ok;
    out.detail = "lhs " + fmt(res[0].lhs) + ">" + fmt(res[1].lhs) + ">" + fmt(res[2].lhs) +
                 ">" + fmt(res[3].lhs) + ">0 exact, worst ratio=" + fmt(worst_ratio) +
                 " (bound " + fmt(kCoupleRatioBound) + ")";
    return out;
}

// ---- C9: sup bound and bmo uniformity over the sweep -------------------------
Outcome c9_uniformity() {
    const PipelineReport& rep = quad_sweep().rep;
    double bmo_min = 1e300, bmo_max = 0.0, sup_min = 1e300;
    for (const PipelineRow& row : rep.rows) {
        bmo_min = std::min(bmo_min, row.bmo_hat);
        bmo_max = std::max(bmo_max, row.bmo_hat);
        sup_min = std::min(sup_min, row.sup_margin);
    }
    const double spread = bmo_min > 0.0 ? bmo_max / bmo_min - 1.0 : 1e300;
    Outcome out;
    out.ok = sup_min > 0.0 && spread < kBmoSpreadTol;
    out.detail = "bmo spread=" + fmt(spread) + " min sup margin=" + fmt(sup_min);
    return out;
}

// ---- C10: artifacts are byte-identical across worker counts ------------------
std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Outcome c10_determinism() {
    const std::filesystem::path dir = "acceptance_artifacts";
    std::filesystem::create_directories(dir);
    const std::string cli = QBSDE_CLI_PATH;

    const auto run = [&](const std::string& args) {
        const std::string cmd = "\"" + cli + "\" " + args + " > /dev/null 2>&1";
        return std::system(cmd.c_str());
    };

    const std::string kb = "kobylanski --driver quadratic:gamma=1 --terminal tanh "
                           "--N 4000 --m 100 --out ";
    const std::string cp = "couple --driver quadratic:gamma=1 --terminal tanh "
                           "--N 2000 --out ";
    const auto kb1 = dir / "sweep_t1.jsonl", kb4 = dir / "sweep_t4.jsonl";
    const auto cp1 = dir / "couple_t1.csv", cp4 = dir / "couple_t4.csv";
    if (run("--seed 2026 --threads 1 " + kb + kb1.string()) != 0 ||
        run("--seed 2026 --threads 4 " + kb + kb4.string()) != 0 ||
        run("--seed 2026 --threads 1 " + cp + cp1.string()) != 0 ||
        run("--seed 2026 --threads 4 " + cp + cp4.string()) != 0)
        return {false, "tool invocation failed"};

    const std::string s1 = slurp(kb1), s4 = slurp(kb4);
    const std::string t1 = slurp(cp1), t4 = slurp(cp4);
    Outcome out;
    out.ok = !s1.empty() && s1 == s4 && !t1.empty() && t1 == t4;
    out.detail = "sweep " + std::to_string(s1.size()) + "B, table " +
                 std::to_string(t1.size()) + "B, 1 vs 4 workers identical";
    if (!out.ok) out.detail = "artifacts differ across worker counts";
    return out;
}

template <typename Fn>
void run_criterion(int idx, const char* name, double limit_s, Fn fn, double extra_elapsed = 0.0) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = fn();
    } catch (const std::exception& e) {
        out.ok = false;
        out.detail = std::string("exception: ") + e.what();
    }
    report(idx, name, out, seconds_since(t0) + extra_elapsed, limit_s);
}

} // namespace

int main() {
    run_criterion(1, "heat-value", 60.0, c1_heat);
    run_criterion(2, "linear-oracle", 60.0, c2_linear);
    run_criterion(3, "quadratic-limit", 300.0, c3_quadratic);
    run_criterion(4, "constructor-soundness", 300.0, c4_construct);
    run_criterion(5, "majorization", 10.0, c5_majorize);
    run_criterion(6, "operator-identity", 10.0, c6_hmatrix);
    run_criterion(7, "drift-tests", 600.0, c7_drift);
    run_criterion(8, "coupling", 600.0, c8_coupling);
    // C9 reuses the C3 sweep; its elapsed time is charged once, to C3
    run_criterion(9, "uniform-bounds", 300.0, c9_uniformity);
    run_criterion(10, "determinism", 0.0, c10_determinism);
    return g_all_ok ? 0 : 1;
}
