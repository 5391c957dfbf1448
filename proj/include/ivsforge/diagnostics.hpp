#pragma once

#include "ivsforge/market_data.hpp"

#include <Eigen/Dense>

#include <functional>
#include <stdexcept>
#include <vector>

namespace ivs {

/// Implied vol as a function of (strike, maturity).
using VolSurface = std::function<double(double strike, double maturity)>;

class DiagnosticsError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ErrorStats {
    double rmse = 0.0;
    double mae = 0.0;
    std::size_t count = 0;     ///< pairs used
    std::size_t excluded = 0;  ///< non-finite pairs dropped
};

/// Throws DiagnosticsError on length mismatch or when nothing finite remains.
ErrorStats rmse_mae(const std::vector<double>& predicted, const std::vector<double>& truth);

inline constexpr double kButterflyTolerance = 2e-5;

/// 100 equally spaced strikes on [80, 140].
std::vector<double> butterfly_strikes();

struct ButterflyResult {
    double rate = 0.0;           ///< violations / evaluated
    std::size_t violations = 0;  ///< B_i < -eps
    std::size_t evaluated = 0;   ///< interior points whose three prices are finite
    std::size_t excluded = 0;    ///< grid points where the surface returned a non-finite vol
    double min_spread = 0.0;     ///< most negative B_i seen
};

/// Second differences of call prices C(K_{i+1}) - 2 C(K_i) + C(K_{i-1}) on an
/// equally spaced strike grid, using Black-Scholes prices of the surface vols.
ButterflyResult butterfly_check(const VolSurface& surface, const MarketConfig& cfg, double tau,
                                const std::vector<double>& strikes = butterfly_strikes(),
                                double eps = kButterflyTolerance);

struct CalendarResult {
    std::size_t violations = 0;  ///< strict decreases in w between consecutive maturities
    std::size_t checked = 0;     ///< (k, tau-pair) comparisons made
    Eigen::MatrixXd total_variance;  ///< rows: log-moneyness, columns: maturity
};

/// w(k, tau) = sigma(F_tau e^k, tau)^2 tau; counts w(k, tau_{j+1}) < w(k, tau_j) - tol.
CalendarResult total_variance_check(const VolSurface& surface, const MarketConfig& cfg,
                                    const std::vector<double>& log_moneyness, const std::vector<double>& maturities,
                                    double tol = 1e-10);

}  // namespace ivs
