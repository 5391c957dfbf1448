#include "ivsforge/diagnostics.hpp"

#include "ivsforge/black_scholes.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace ivs;

TEST_CASE("rmse and mae") {
    const ErrorStats s = rmse_mae({1.0, 2.0, 4.0}, {1.0, 1.0, 1.0});
    CHECK(s.rmse == doctest::Approx(std::sqrt(10.0 / 3.0)));
    CHECK(s.mae == doctest::Approx(4.0 / 3.0));
    CHECK(s.count == 3);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const ErrorStats t = rmse_mae({1.0, nan, 3.0}, {0.0, 1.0, nan});
    CHECK(t.count == 1);
    CHECK(t.excluded == 2);
    CHECK(t.rmse == 1.0);
    CHECK_THROWS_AS(rmse_mae({1.0}, {1.0, 2.0}), DiagnosticsError);
    CHECK_THROWS_AS(rmse_mae({nan}, {1.0}), DiagnosticsError);
}

TEST_CASE("butterfly strikes") {
    const auto k = butterfly_strikes();
    REQUIRE(k.size() == 100);
    CHECK(k.front() == 80.0);
    CHECK(k.back() == 140.0);
}

TEST_CASE("flat surface has no butterfly or calendar violations") {
    const MarketConfig cfg;
    const VolSurface flat = [](double, double) { return 0.2; };
    const ButterflyResult b = butterfly_check(flat, cfg, 0.9);
    CHECK(b.violations == 0);
    CHECK(b.evaluated == 98);
    CHECK(b.rate == 0.0);
    CHECK(b.min_spread >= 0.0);
    const CalendarResult c = total_variance_check(flat, cfg, {-0.2, 0.0, 0.2}, {0.5, 1.0, 2.0});
    CHECK(c.violations == 0);
    CHECK(c.checked == 6);
    CHECK(c.total_variance(1, 2) == doctest::Approx(0.08));
}

TEST_CASE("a sawtooth smile is flagged") {
    const MarketConfig cfg;
    // vol bump at every other strike makes prices locally concave
    const auto k = butterfly_strikes();
    const VolSurface saw = [&](double strike, double) {
        const long i = std::lround((strike - 80.0) / (60.0 / 99.0));
        return i % 2 == 0 ? 0.2 : 0.23;
    };
    const ButterflyResult b = butterfly_check(saw, cfg, 0.3);
    CHECK(b.violations > 40);
    CHECK(b.min_spread < -kButterflyTolerance);
    CHECK(b.rate == doctest::Approx(static_cast<double>(b.violations) / 98.0));
}

TEST_CASE("non-finite vols are excluded") {
    const MarketConfig cfg;
    const VolSurface holes = [](double strike, double) {
        return strike > 130.0 ? std::numeric_limits<double>::quiet_NaN() : 0.2;
    };
    const ButterflyResult b = butterfly_check(holes, cfg, 1.0);
    CHECK(b.excluded > 0);
    CHECK(b.evaluated + 2 + b.excluded == 100);
    const VolSurface none = [](double, double) { return std::numeric_limits<double>::quiet_NaN(); };
    CHECK_THROWS_AS(butterfly_check(none, cfg, 1.0), DiagnosticsError);
}

TEST_CASE("decreasing total variance is a calendar violation") {
    const MarketConfig cfg;
    // sigma^2 tau = 0.04 / tau * tau^0 ... w decreasing in tau
    const VolSurface dec = [](double, double tau) { return 0.2 / tau; };
    const CalendarResult c = total_variance_check(dec, cfg, {0.0}, {0.5, 1.0, 2.0});
    CHECK(c.violations == 2);
    CHECK_THROWS_AS(total_variance_check(dec, cfg, {0.0}, {1.0, 0.5}), DiagnosticsError);
}
