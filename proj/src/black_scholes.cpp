#include "ivsforge/black_scholes.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace ivs {

void IvSolverConfig::validate() const {
    if (!(sigma_lo > 0.0) || !(sigma_hi > sigma_lo))
        throw std::invalid_argument("IvSolverConfig: need 0 < sigma_lo < sigma_hi");
    if (!(tolerance > 0.0)) throw std::invalid_argument("IvSolverConfig: tolerance must be positive");
    if (max_iter < 1) throw std::invalid_argument("IvSolverConfig: max_iter must be at least 1");
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

namespace {

struct Forward {
    double forward;
    double discount;
};

Forward forward_and_discount(const MarketConfig& cfg, double tau) {
    return {forward_price(cfg, tau), std::exp(-cfg.rate * tau)};
}

// Value of the out-of-the-money option (call for K >= F, put otherwise).
// Both terms are evaluated in the tail of the normal distribution, so the
// result keeps relative precision even when it is far below one ulp of spot.
double otm_value(double fwd, double discount, double strike, double tau, double sigma) {
    const double sd = sigma * std::sqrt(tau);
    if (!(sd > 0.0)) return 0.0;
    const double d1 = (std::log(fwd / strike) + 0.5 * sd * sd) / sd;
    const double d2 = d1 - sd;
    if (strike >= fwd) return discount * std::max(fwd * norm_cdf(d1) - strike * norm_cdf(d2), 0.0);
    return discount * std::max(strike * norm_cdf(-d2) - fwd * norm_cdf(-d1), 0.0);
}

}  // namespace

double bs_call_price(const MarketConfig& cfg, double strike, double tau, double sigma) {
    const auto [fwd, df] = forward_and_discount(cfg, tau);
    const double intrinsic = df * std::max(fwd - strike, 0.0);
    return intrinsic + otm_value(fwd, df, strike, tau, sigma);
}

double bs_vega(const MarketConfig& cfg, double strike, double tau, double sigma) {
    const auto [fwd, df] = forward_and_discount(cfg, tau);
    const double sq = std::sqrt(tau);
    const double sd = sigma * sq;
    if (!(sd > 0.0)) return 0.0;
    const double d1 = (std::log(fwd / strike) + 0.5 * sd * sd) / sd;
    return df * fwd * norm_pdf(d1) * sq;
}

double implied_vol(const MarketConfig& cfg, double strike, double tau, double price,
                   const IvSolverConfig& solver) {
    solver.validate();
    const auto [fwd, df] = forward_and_discount(cfg, tau);
    const double lower = df * std::max(fwd - strike, 0.0);
    const double upper = df * fwd;
    if (!(price > lower) || !(price < upper) || !std::isfinite(price))
        throw ImpliedVolError(ImpliedVolError::Kind::OutsideArbitrageBand,
                              "call price " + std::to_string(price) + " outside the no-arbitrage band (" +
                                  std::to_string(lower) + ", " + std::to_string(upper) + ")");

    // Work on the out-of-the-money time value so deep wings stay well conditioned.
    const double target = price - lower;
    const double log_target = std::log(target);

    double lo = solver.sigma_lo;
    double hi = solver.sigma_hi;
    const double v_lo = otm_value(fwd, df, strike, tau, lo);
    const double v_hi = otm_value(fwd, df, strike, tau, hi);
    if (target < v_lo) {
        if (v_lo - target <= solver.tolerance) return lo;
        throw ImpliedVolError(ImpliedVolError::Kind::OutsideArbitrageBand,
                              "call price below the value at sigma_lo");
    }
    if (target > v_hi) {
        if (target - v_hi <= solver.tolerance) return hi;
        throw ImpliedVolError(ImpliedVolError::Kind::OutsideArbitrageBand,
                              "call price above the value at sigma_hi");
    }

    // Start at the vega-maximising volatility; Newton on log time value
    // converges monotonically from there.
    const double log_moneyness = std::abs(std::log(fwd / strike));
    double sigma = log_moneyness > 1e-12 ? std::sqrt(2.0 * log_moneyness / tau)
                                         : std::sqrt(2.0 * std::numbers::pi / tau) * target / upper;
    sigma = std::clamp(sigma, lo, hi);

    double best = sigma;
    double best_err = std::numeric_limits<double>::infinity();
    for (int it = 0; it < solver.max_iter; ++it) {
        const double value = otm_value(fwd, df, strike, tau, sigma);
        const double err = value - target;
        if (std::abs(err) < best_err) {
            best_err = std::abs(err);
            best = sigma;
        }
        if (err == 0.0) return sigma;
        if (err < 0.0)
            lo = sigma;
        else
            hi = sigma;

        const double vega = bs_vega(cfg, strike, tau, sigma);
        double next;
        if (value > 0.0 && vega > 0.0 && std::isfinite(vega)) {
            // Newton on log(value): step = -(log v - log t) * v / vega
            next = sigma - (std::log(value) - log_target) * value / vega;
        } else {
            next = 0.5 * (lo + hi);
        }
        if (!(next > lo && next < hi) || vega < 1e-12 * std::max(value, 1e-300)) next = 0.5 * (lo + hi);

        const double step = std::abs(next - sigma);
        sigma = next;
        if (std::abs(err) <= solver.tolerance && (step <= 1e-13 * sigma || hi - lo <= 1e-15 * sigma)) {
            return sigma;
        }
    }
    if (best_err <= solver.tolerance) return best;
    throw ImpliedVolError(ImpliedVolError::Kind::NoConvergence,
                          "implied vol did not converge in " + std::to_string(solver.max_iter) + " iterations");
}

}  // namespace ivs
