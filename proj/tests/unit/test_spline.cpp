#include "ivsforge/spline.hpp"

#include <doctest.h>

#include <cmath>

using namespace ivs;

TEST_CASE("natural cubic spline interpolates and is exact for lines") {
    const NaturalCubicSpline line({0.0, 1.0, 3.0, 4.0}, {1.0, 3.0, 7.0, 9.0});
    for (double x : {0.0, 0.5, 2.2, 4.0}) CHECK(line(x) == doctest::Approx(1.0 + 2.0 * x).epsilon(1e-14));
    // flat beyond the ends
    CHECK(line(-3.0) == 1.0);
    CHECK(line(10.0) == 9.0);

    const NaturalCubicSpline s({0.0, 1.0, 2.0, 3.0}, {0.0, 1.0, 0.0, 1.0});
    CHECK(s(1.0) == doctest::Approx(1.0));
    CHECK(s(2.0) == doctest::Approx(0.0));
    // hand-solved second derivatives: m1 = -4, m2 = 4
    CHECK(s(0.5) == doctest::Approx(0.75));
    CHECK_THROWS_AS(NaturalCubicSpline({0.0, 0.0, 1.0}, {1.0, 1.0, 1.0}), SplineError);
    CHECK_THROWS_AS(NaturalCubicSpline({0.0, 1.0}, {1.0}), SplineError);
}

TEST_CASE("surface fit skips thin slices and interpolates in maturity") {
    std::vector<OptionQuote> qs;
    for (int i = 0; i < 5; ++i) {
        const double k = 80.0 + 10 * i;
        qs.push_back({k, 0.5, 0.3});
        qs.push_back({k, 1.5, 0.2});
    }
    qs.push_back({100.0, 3.0, 0.1});
    qs.push_back({110.0, 3.0, 0.1});
    const SplineSurface s = fit_spline_baseline(QuoteSet(Task::Target, qs));
    REQUIRE(s.maturities().size() == 2);
    REQUIRE(s.skipped().size() == 1);
    CHECK(s.skipped()[0] == 3.0);
    CHECK(s(95.0, 1.0) == doctest::Approx(0.25));
    CHECK(s(95.0, 0.1) == doctest::Approx(0.3));
    CHECK(s(95.0, 3.0) == doctest::Approx(0.2));
    CHECK(s(500.0, 0.5) == doctest::Approx(0.3));

    CHECK_THROWS_AS(fit_spline_baseline(QuoteSet(Task::Target, {{100, 1, 0.2}, {110, 1, 0.2}, {120, 1, 0.2}})),
                    SplineError);
}
