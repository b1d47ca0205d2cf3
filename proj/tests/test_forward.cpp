#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "qbsde/forward.hpp"

using namespace qbsde;

TEST_CASE("identity payoff with zero driver replays exactly") {
    // u(t, x) = x, so Z = 1 and X_T = B_T = xi up to grid round-off.
    const DriverSpec f = make_driver("zero");
    const TerminalCondition h = make_terminal("identity");
    const TimeGrid tg{1.0, 100};
    const ValueGrid vg = solve_semilinear(f, h, tg, 0.02, 8.0);
    const PathEnsemble ens = simulate_bm(tg, 2000, 1, 17);
    const ForwardRun run = simulate_forward(vg, ens, f, 0.0);
    CHECK(run.x0 == Catch::Approx(0.0).margin(1e-10));
    const GapStat gap = terminal_gap(run, ens, h);
    CHECK(gap.value < 1e-18);
    CHECK(run.clamp_frac == 0.0);
}

TEST_CASE("first-moment gap obeys the Cauchy-Schwarz bound") {
    const DriverSpec f = make_driver("quadratic:gamma=1");
    const TerminalCondition h = make_terminal("tanh");
    const TimeGrid tg{1.0, 100};
    SolveOptions sopt;
    sopt.lip_z = 1.0;
    const DriverSpec fk = truncate(f, 16.0);
    const ValueGrid vg = solve_semilinear(fk, h, tg, 0.02, 8.0, sopt);
    const PathEnsemble ens = simulate_bm(tg, 4000, 1, 23);
    const ForwardRun run = simulate_forward(vg, ens, fk, 16.0);
    const GapStat g1 = terminal_gap(run, ens, h, 1.0);
    const GapStat g2 = terminal_gap(run, ens, h, 2.0);
    CHECK(g1.value <= std::sqrt(g2.value) + 1e-12);
    CHECK(g2.value < 1e-2);
}

TEST_CASE("harsh truncation hurts: gaps shrink as the ceiling rises") {
    // tanh:scale=4 has slopes up to 4; k = 1 clips hard, k = 8 never does.
    const DriverSpec f = make_driver("quadratic:gamma=0.25");
    const TerminalCondition h = make_terminal("tanh:scale=4");
    const TimeGrid tg{1.0, 100};
    const PathEnsemble ens = simulate_bm(tg, 4000, 1, 29);
    double gap_k1 = 0.0, gap_k8 = 0.0, clamp_k1 = 0.0;
    for (const double k : {1.0, 8.0}) {
        const DriverSpec fk = truncate(f, k);
        SolveOptions sopt;
        sopt.lip_z = z_slope_hint(f, 2.0, k);
        const ValueGrid vg = solve_semilinear(fk, h, tg, 0.02, 8.0, sopt);
        ForwardRun run = simulate_forward(vg, ens, fk, k);
        const double gap = terminal_gap(run, ens, h).value;
        if (k == 1.0) {
            gap_k1 = gap;
            // the k = 1 slope ball genuinely clips this payoff: near the
            // horizon the solution still carries slopes close to 4 (they
            // only flatten towards t = 0 under the heat smoothing)
            double zmax = 0.0;
            for (int i = 0; i <= vg.tg.m; ++i)
                for (int j = 0; j <= vg.J; ++j)
                    zmax = std::max(zmax, std::abs(vg.uxat(i, j)));
            clamp_k1 = zmax;
        } else {
            gap_k8 = gap;
        }
    }
    CHECK(clamp_k1 > 1.0);
    CHECK(gap_k8 < gap_k1);
    CHECK(gap_k8 < 1e-2);
}

TEST_CASE("pipeline rows are self-consistent and converge for the benchmark") {
    PipelineOptions opt;
    opt.N = 4000;
    opt.grid = TimeGrid{1.0, 100};
    opt.keep_process = true;
    const PipelineReport rep =
        kobylanski_pipeline(make_driver("quadratic:gamma=1"), make_terminal("tanh"), opt);
    REQUIRE(rep.rows.size() == 5);
    for (std::size_t i = 0; i < rep.rows.size(); ++i) {
        CHECK(rep.rows[i].sup_margin > 0.0);
        CHECK(rep.rows[i].gap_p2 >= 0.0);
        if (i > 0) {
            // wider ceilings never hurt by more than noise
            CHECK(rep.rows[i].gap_p2 <=
                  rep.rows[i - 1].gap_p2 + 2.0 * (rep.rows[i].gap_se +
                                                  rep.rows[i - 1].gap_se));
        }
    }
    CHECK(rep.rows.back().gap_p2 < 1e-2);
    CHECK(rep.y0_limit == rep.rows.back().y0);
    // retained artifacts line up with the request
    CHECK(rep.last_process.y.size() ==
          static_cast<std::size_t>(opt.N) * (opt.grid.m + 1));
    CHECK(rep.paths->N == opt.N);
}

TEST_CASE("early stopping truncates the schedule once levels agree") {
    PipelineOptions opt;
    opt.N = 1000;
    opt.grid = TimeGrid{1.0, 50};
    opt.early_stop_gap = 1e-12;
    // |u_x| <= 1 here, so every level k >= 1 solves the identical PDE and the
    // sweep should stop right after the second one confirms the first.
    const PipelineReport rep =
        kobylanski_pipeline(make_driver("quadratic:gamma=1"), make_terminal("tanh"), opt);
    CHECK(rep.early_stopped);
    CHECK(rep.rows.size() == 2);
}

TEST_CASE("pipeline rejects a non-increasing schedule") {
    PipelineOptions opt;
    opt.schedule = {4.0, 2.0};
    CHECK_THROWS_AS(
        kobylanski_pipeline(make_driver("quadratic:gamma=1"), make_terminal("tanh"), opt),
        std::invalid_argument);
}
