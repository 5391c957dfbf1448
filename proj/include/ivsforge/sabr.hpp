#pragma once

#include "ivsforge/market_data.hpp"

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <vector>

namespace ivs {

struct SabrSliceParams {
    double alpha = 0.2;
    double beta = 0.5;
    double rho = -0.3;
    double nu = 0.4;
    double maturity = 1.0;

    void validate() const;
};

struct CalibrationBounds {
    double alpha_lo = 0.01, alpha_hi = 2.0;
    double rho_lo = -0.99, rho_hi = 0.0;
    double nu_lo = 0.05, nu_hi = 1.5;

    void validate() const;
    bool contains(const SabrSliceParams& p) const;
};

/// Calibrated slices sorted by maturity with a shared beta. Strikes and
/// forwards are divided by `scale` (the spot) before entering the expansion,
/// so alpha is quoted in spot-relative units.
class SabrTermStructure {
public:
    SabrTermStructure() = default;
    SabrTermStructure(std::vector<SabrSliceParams> slices, double beta, double scale = 1.0);

    const std::vector<SabrSliceParams>& slices() const { return slices_; }
    double beta() const { return beta_; }
    double scale() const { return scale_; }
    bool empty() const { return slices_.empty(); }

private:
    std::vector<SabrSliceParams> slices_;
    double beta_ = 0.5;
    double scale_ = 1.0;
};

struct SynthesisConfig {
    std::size_t n_strikes = 35;
    std::size_t n_maturities = 35;
    double strike_lo = 70.0, strike_hi = 160.0;
    double maturity_lo = 0.08, maturity_hi = 3.0;
    double noise_sd = 0.01;
    std::uint64_t seed = 42;

    void validate() const;
};

class SabrError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Hagan's lognormal implied-volatility expansion.
double hagan_iv(const SabrSliceParams& p, double strike, double forward, double tau);

/// z / chi(z); uses 1 - rho z / 2 + (2 - 3 rho^2) z^2 / 12 for |z| < 1e-6.
double z_over_chi(double z, double rho);

struct SliceCalibration {
    SabrSliceParams params;
    double objective = 0.0;          ///< sum of squared vol errors at the optimum
    double initial_objective = 0.0;  ///< same at the starting point
    bool converged = true;           ///< false means best-so-far after the budget ran out
};

struct SliceCalibrationOptions {
    int max_iter = 4000;
    double f_tol = 1e-18;
    double x_tol = 1e-11;
    int polish_rounds = 3;
    double restart_mse = 1e-4;
    int alpha_starts = 5;  ///< extra starts log-spaced over the alpha bounds (x2 rho starts)
};

/// Least-squares fit of (alpha, rho, nu) to one smile with beta fixed, by
/// Nelder-Mead in logit coordinates of the bounds.
SliceCalibration calibrate_slice(const std::vector<OptionQuote>& smile, double forward, double beta,
                                 const CalibrationBounds& bounds = {}, const SliceCalibrationOptions& opts = {});

/// Calibrates every maturity slice with at least three quotes, in units of spot.
SabrTermStructure calibrate_term_structure(const QuoteSet& quotes, const MarketConfig& cfg, double beta,
                                           const CalibrationBounds& bounds = {});

/// Exact at knots, linear between them, constant outside.
SabrSliceParams interp_params(const SabrTermStructure& ts, double tau);

/// SABR implied vol anywhere on the surface.
double sabr_surface_iv(const SabrTermStructure& ts, const MarketConfig& cfg, double strike, double tau);

/// Dense source-task grid from the interpolated term structure plus seeded Gaussian noise.
QuoteSet generate_synthetic_dataset(const SabrTermStructure& ts, const MarketConfig& cfg, const SynthesisConfig& syn);

/// `tau,alpha,beta,rho,nu` rows.
void write_term_structure_csv(const SabrTermStructure& ts, std::ostream& out);

}  // namespace ivs
