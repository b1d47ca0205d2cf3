#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "qbsde/driver.hpp"

using namespace qbsde;

TEST_CASE("project_ball scales outside points and leaves inside ones alone") {
    std::vector<double> z{3.0, 4.0}; // norm 5
    REQUIRE(project_ball(z, 2.0));
    CHECK(z[0] == Catch::Approx(1.2).margin(1e-15));
    CHECK(z[1] == Catch::Approx(1.6).margin(1e-15));
    CHECK(norm2(z) == Catch::Approx(2.0).margin(1e-15));

    std::vector<double> inside{0.3, -0.4};
    const std::vector<double> copy = inside;
    REQUIRE_FALSE(project_ball(inside, 2.0));
    CHECK(inside == copy); // bit-for-bit identity inside the ball

    std::vector<double> any{1.0};
    CHECK_THROWS_AS(project_ball(any, 0.0), std::invalid_argument);
}

TEST_CASE("project_scalar clamps to [-k, k]") {
    CHECK(project_scalar(5.0, 2.0) == 2.0);
    CHECK(project_scalar(-5.0, 2.0) == -2.0);
    CHECK(project_scalar(1.5, 2.0) == 1.5);
}

TEST_CASE("truncate caps the z argument and tags the label") {
    const DriverSpec f = make_driver("quadratic:gamma=1");
    const DriverSpec fk = truncate(f, 2.0);
    CHECK(fk.label == "quadratic:gamma=1|k=2");
    // inside the ball: identical values
    CHECK(fk.eval11(0.0, 0.0, 1.5) == f.eval11(0.0, 0.0, 1.5));
    // outside: evaluated at the projected point
    CHECK(fk.eval11(0.0, 0.0, 7.0) == Catch::Approx(0.5 * 4.0).margin(1e-15));
    // the general-form path agrees with the scalar fast path
    const double y = 0.0, z = 7.0;
    double out = 0.0;
    fk.eval(0.0, std::span<const double>(&y, 1), std::span<const double>(&z, 1),
            std::span<double>(&out, 1));
    CHECK(out == fk.eval11(0.0, y, z));
    CHECK_THROWS_AS(truncate(f, -1.0), std::invalid_argument);
}

TEST_CASE("registry builds the documented families") {
    CHECK(make_driver("zero").eval11(0.3, 5.0, -2.0) == 0.0);
    CHECK(make_driver("linear:alpha=0.5").eval11(0.0, 2.0, 9.0) == Catch::Approx(1.0));
    CHECK(make_driver("quadratic:gamma=2").eval11(0.0, 0.0, 3.0) == Catch::Approx(9.0));
    CHECK(make_driver("zlinear:c=-1").eval11(0.0, 0.0, 0.7) == Catch::Approx(-0.7));

    CHECK_THROWS_AS(make_driver("nosuch"), std::invalid_argument);
    CHECK_THROWS_AS(make_driver("zero:bogus=1"), std::invalid_argument);
    CHECK_THROWS_AS(make_driver("quadratic:gamma=abc"), std::invalid_argument);
    CHECK_THROWS_AS(make_driver("zlinear:n=2"), std::invalid_argument);
}

TEST_CASE("z_slope_hint prefers declared coefficients") {
    const DriverSpec q = make_driver("quadratic:gamma=1.5");
    CHECK(z_slope_hint(q, 3.0, 4.0) == Catch::Approx(1.5 * 4.0));

    DriverSpec anon; // no declared slope: generic structural estimate
    anon.M = 2.0;
    CHECK(z_slope_hint(anon, 3.0, 4.0) == Catch::Approx(2.0 * (1.0 + 6.0 + 8.0)));
}

TEST_CASE("validation passes the structural families") {
    for (const char* label : {"zero", "linear:alpha=0.5", "quadratic:gamma=1",
                              "zlinear:c=-1"}) {
        const ValidationReport rep = validate_driver(make_driver(label), 7);
        INFO(label);
        CHECK(rep.pass);
        CHECK(rep.violations.empty());
        CHECK(rep.worst_ratio <= 1.0 + 1e-9);
    }
}

TEST_CASE("validation flags cubic z growth and records witnesses") {
    const ValidationReport rep = validate_driver(make_driver("cubicz"), 7);
    CHECK_FALSE(rep.pass);
    REQUIRE_FALSE(rep.violations.empty());
    const DriverViolation& v = rep.violations.front();
    CHECK((v.kind == "growth" || v.kind == "regularity"));
    CHECK(v.lhs > v.rhs); // the witness actually violates the recorded bound
    // the same driver truncated to |z| <= 1 is back inside the class
    const ValidationReport fixed = validate_driver(truncate(make_driver("cubicz"), 1.0), 7);
    CHECK(fixed.pass);
}

TEST_CASE("validation treats non-finite driver values as hard errors") {
    DriverSpec bad;
    bad.label = "nan";
    bad.f = [](double, std::span<const double>, std::span<const double>,
               std::span<double> out) { out[0] = std::nan(""); };
    CHECK_THROWS_AS(validate_driver(bad, 1), std::runtime_error);
}

TEST_CASE("eval11 falls back to the general form when no fast path exists") {
    DriverSpec s;
    s.label = "general-only";
    s.f = [](double t, std::span<const double> y, std::span<const double> z,
             std::span<double> out) { out[0] = t + y[0] + z[0] * z[0]; };
    CHECK(s.eval11(0.5, 1.0, 2.0) == Catch::Approx(5.5));
}
