#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "qbsde/parallel.hpp"
#include "qbsde/paths.hpp"

using namespace qbsde;

TEST_CASE("path simulation is bitwise deterministic across thread counts") {
    const TimeGrid g{1.0, 50};
    const PathEnsemble a = simulate_bm(g, 500, 1, 99, 1);
    const PathEnsemble b = simulate_bm(g, 500, 1, 99, 4);
    REQUIRE(a.b.size() == b.b.size());
    CHECK(a.b == b.b);
    // and different seeds really decorrelate
    const PathEnsemble c = simulate_bm(g, 500, 1, 100, 1);
    CHECK(a.b != c.b);
}

TEST_CASE("terminal marginals match the normal law") {
    const TimeGrid g{1.0, 100};
    const int N = 20000;
    const PathEnsemble ens = simulate_bm(g, N, 1, 7);
    double s1 = 0.0, s2 = 0.0;
    for (int p = 0; p < N; ++p) {
        const double bT = ens.bval(p, g.m);
        s1 += bT;
        s2 += bT * bT;
    }
    const double mean = s1 / N;
    const double var = s2 / N - mean * mean;
    CHECK(std::abs(mean) < 3.0 / std::sqrt(static_cast<double>(N)));
    CHECK(var == Catch::Approx(1.0).epsilon(0.02));
}

TEST_CASE("quadratic variation accumulates to the horizon") {
    const TimeGrid g{1.0, 200};
    const int N = 2000;
    const PathEnsemble ens = simulate_bm(g, N, 1, 11);
    double qv_mean = 0.0;
    for (int p = 0; p < N; ++p) {
        double qv = 0.0;
        for (int i = 0; i < g.m; ++i) {
            const double db = ens.bval(p, i + 1) - ens.bval(p, i);
            qv += db * db;
        }
        qv_mean += qv;
    }
    qv_mean /= N;
    CHECK(qv_mean == Catch::Approx(1.0).epsilon(0.01));
}

TEST_CASE("paths start at the origin and increments have step variance") {
    const TimeGrid g{2.0, 40};
    const PathEnsemble ens = simulate_bm(g, 4000, 1, 3);
    for (int p = 0; p < 5; ++p) CHECK(ens.bval(p, 0) == 0.0);
    double s2 = 0.0;
    int cnt = 0;
    for (int p = 0; p < ens.N; ++p)
        for (int i = 0; i < g.m; ++i) {
            const double db = ens.bval(p, i + 1) - ens.bval(p, i);
            s2 += db * db;
            ++cnt;
        }
    CHECK(s2 / cnt == Catch::Approx(g.T / g.m).epsilon(0.02));
}

TEST_CASE("path export is a readable CSV capped at max_paths") {
    const TimeGrid g{1.0, 4};
    const PathEnsemble ens = simulate_bm(g, 10, 1, 5);
    std::ostringstream out;
    export_paths_csv(out, ens, 2);
    std::istringstream in(out.str());
    std::string line;
    int lines = 0, header = 0;
    while (std::getline(in, line)) {
        if (lines == 0) {
            header = 1;
            CHECK(line.find("path") != std::string::npos);
        }
        ++lines;
    }
    CHECK(header == 1);
    CHECK(lines == 1 + 2 * (g.m + 1)); // header + 2 paths x 5 time points
}

TEST_CASE("block reductions are independent of the thread count") {
    const std::size_t total = 10001; // deliberately not a multiple of the block size
    std::vector<double> v(total);
    CounterRng rng(42, kStreamValidate);
    for (std::size_t i = 0; i < total; ++i) v[i] = rng.gaussian(0, i, 0);
    const MeanVar a = block_mean_var(total, 1, [&](std::size_t i) { return v[i]; });
    const MeanVar b = block_mean_var(total, 4, [&](std::size_t i) { return v[i]; });
    CHECK(a.mean == b.mean); // bitwise, thanks to the fixed block fold
    CHECK(a.var == b.var);
    CHECK(a.count == total);
    CHECK(a.se == Catch::Approx(std::sqrt(a.var / total)).margin(1e-15));
}
