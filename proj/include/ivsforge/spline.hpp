#pragma once

#include "ivsforge/market_data.hpp"

#include <stdexcept>
#include <vector>

namespace ivs {

/// Natural cubic spline through (x_i, y_i); flat beyond the end knots.
class NaturalCubicSpline {
public:
    NaturalCubicSpline(std::vector<double> x, std::vector<double> y);
    double operator()(double x) const;

private:
    std::vector<double> x_, y_, m_;  // m_ = second derivatives at knots
};

class SplineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-maturity natural cubic splines in strike, linear in maturity at fixed
/// strike, constant outside the quoted strike and maturity ranges.
class SplineSurface {
public:
    double operator()(double strike, double maturity) const;

    const std::vector<double>& maturities() const { return maturities_; }
    /// Maturities dropped for having fewer than 4 strikes.
    const std::vector<double>& skipped() const { return skipped_; }

private:
    friend SplineSurface fit_spline_baseline(const QuoteSet&);
    std::vector<double> maturities_;
    std::vector<NaturalCubicSpline> slices_;
    std::vector<double> skipped_;
};

/// Throws SplineError if no slice has at least 4 strikes.
SplineSurface fit_spline_baseline(const QuoteSet& target);

}  // namespace ivs
