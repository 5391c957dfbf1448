#pragma once

#include "ivsforge/market_data.hpp"

#include <stdexcept>
#include <string>

namespace ivs {

struct IvSolverConfig {
    double tolerance = 1e-5;  ///< absolute price tolerance
    int max_iter = 200;
    double sigma_lo = 1e-4;
    double sigma_hi = 5.0;

    void validate() const;
};

double norm_cdf(double x);
double norm_pdf(double x);

/// Discounted Black-Scholes call. sigma = 0 gives the discounted forward intrinsic.
double bs_call_price(const MarketConfig& cfg, double strike, double tau, double sigma);

/// dC/dsigma.
double bs_vega(const MarketConfig& cfg, double strike, double tau, double sigma);

class ImpliedVolError : public std::runtime_error {
public:
    enum class Kind { OutsideArbitrageBand, NoConvergence };

    ImpliedVolError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Safeguarded Newton inversion of bs_call_price.
///
/// Newton steps are kept inside a bisection bracket that shrinks with every
/// evaluation, so every iterate lies in [sigma_lo, sigma_hi]. Once the price
/// tolerance is met the iteration keeps polishing until the volatility step
/// falls below 1e-12, which matters for deep out-of-the-money quotes where
/// the tolerance alone pins sigma only loosely.
///
/// Throws ImpliedVolError(OutsideArbitrageBand) when the price is not strictly
/// inside (e^{-r tau} max(F-K,0), S0 e^{-q tau}) or is not attainable within
/// [sigma_lo, sigma_hi], and ImpliedVolError(NoConvergence) after max_iter.
double implied_vol(const MarketConfig& cfg, double strike, double tau, double price,
                   const IvSolverConfig& solver = {});

}  // namespace ivs
