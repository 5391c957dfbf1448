#include "ivsforge/diagnostics.hpp"

#include "ivsforge/black_scholes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ivs {

ErrorStats rmse_mae(const std::vector<double>& predicted, const std::vector<double>& truth) {
    if (predicted.size() != truth.size()) throw DiagnosticsError("rmse_mae: length mismatch");
    ErrorStats s;
    double sq = 0.0, ab = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double e = predicted[i] - truth[i];
        if (!std::isfinite(e)) {
            ++s.excluded;
            continue;
        }
        sq += e * e;
        ab += std::abs(e);
        ++s.count;
    }
    if (s.count == 0) throw DiagnosticsError("rmse_mae: no finite pairs");
    s.rmse = std::sqrt(sq / static_cast<double>(s.count));
    s.mae = ab / static_cast<double>(s.count);
    return s;
}

std::vector<double> butterfly_strikes() { return linspace(80.0, 140.0, 100); }

ButterflyResult butterfly_check(const VolSurface& surface, const MarketConfig& cfg, double tau,
                                const std::vector<double>& strikes, double eps) {
    if (strikes.size() < 3) throw DiagnosticsError("butterfly_check: need at least 3 strikes");
    if (!(eps > 0.0)) throw DiagnosticsError("butterfly_check: tolerance must be positive");
    std::vector<double> price(strikes.size(), std::numeric_limits<double>::quiet_NaN());
    ButterflyResult r;
    for (std::size_t i = 0; i < strikes.size(); ++i) {
        const double vol = surface(strikes[i], tau);
        if (!std::isfinite(vol) || !(vol > 0.0)) {
            ++r.excluded;
            continue;
        }
        price[i] = bs_call_price(cfg, strikes[i], tau, vol);
    }
    for (std::size_t i = 1; i + 1 < strikes.size(); ++i) {
        const double b = price[i + 1] - 2.0 * price[i] + price[i - 1];
        if (!std::isfinite(b)) continue;
        ++r.evaluated;
        r.min_spread = std::min(r.min_spread, b);
        if (b < -eps) ++r.violations;
    }
    if (r.evaluated == 0) throw DiagnosticsError("butterfly_check: no interior point could be evaluated");
    r.rate = static_cast<double>(r.violations) / static_cast<double>(r.evaluated);
    return r;
}

CalendarResult total_variance_check(const VolSurface& surface, const MarketConfig& cfg,
                                    const std::vector<double>& log_moneyness, const std::vector<double>& maturities,
                                    double tol) {
    if (!std::is_sorted(maturities.begin(), maturities.end()))
        throw DiagnosticsError("total_variance_check: maturities must be increasing");
    CalendarResult r;
    const auto nk = static_cast<Eigen::Index>(log_moneyness.size());
    const auto nt = static_cast<Eigen::Index>(maturities.size());
    r.total_variance.resize(nk, nt);
    for (Eigen::Index j = 0; j < nt; ++j) {
        const double tau = maturities[static_cast<std::size_t>(j)];
        const double fwd = forward_price(cfg, tau);
        for (Eigen::Index i = 0; i < nk; ++i) {
            const double vol = surface(fwd * std::exp(log_moneyness[static_cast<std::size_t>(i)]), tau);
            r.total_variance(i, j) = vol * vol * tau;
        }
    }
    for (Eigen::Index i = 0; i < nk; ++i) {
        for (Eigen::Index j = 0; j + 1 < nt; ++j) {
            const double a = r.total_variance(i, j), b = r.total_variance(i, j + 1);
            if (!std::isfinite(a) || !std::isfinite(b)) continue;
            ++r.checked;
            if (b < a - tol) ++r.violations;
        }
    }
    return r;
}

}  // namespace ivs
