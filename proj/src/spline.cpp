#include "ivsforge/spline.hpp"

#include <algorithm>

namespace ivs {

NaturalCubicSpline::NaturalCubicSpline(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)), m_(x_.size(), 0.0) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw SplineError("NaturalCubicSpline: need matching x, y with at least 2 knots");
    for (std::size_t i = 1; i < n; ++i)
        if (!(x_[i] > x_[i - 1])) throw SplineError("NaturalCubicSpline: knots must be strictly increasing");
    if (n == 2) return;
    // Thomas algorithm on the interior second derivatives, m_0 = m_{n-1} = 0
    std::vector<double> c(n, 0.0), d(n, 0.0);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const double h0 = x_[i] - x_[i - 1], h1 = x_[i + 1] - x_[i];
        const double rhs = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
        const double diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
        c[i] = h1 / diag;
        d[i] = (rhs - h0 * d[i - 1]) / diag;
    }
    for (std::size_t i = n - 2; i >= 1; --i) m_[i] = d[i] - c[i] * m_[i + 1];
}

double NaturalCubicSpline::operator()(double x) const {
    if (x <= x_.front()) return y_.front();
    if (x >= x_.back()) return y_.back();
    const auto it = std::upper_bound(x_.begin(), x_.end(), x);
    const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
    const double h = x_[i + 1] - x_[i];
    const double a = (x_[i + 1] - x) / h, b = (x - x_[i]) / h;
    return a * y_[i] + b * y_[i + 1] + ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
}

double SplineSurface::operator()(double strike, double maturity) const {
    if (maturity <= maturities_.front()) return slices_.front()(strike);
    if (maturity >= maturities_.back()) return slices_.back()(strike);
    const auto it = std::lower_bound(maturities_.begin(), maturities_.end(), maturity);
    const std::size_t j = static_cast<std::size_t>(it - maturities_.begin());
    if (*it == maturity) return slices_[j](strike);
    const double w = (maturity - maturities_[j - 1]) / (maturities_[j] - maturities_[j - 1]);
    return (1.0 - w) * slices_[j - 1](strike) + w * slices_[j](strike);
}

SplineSurface fit_spline_baseline(const QuoteSet& target) {
    SplineSurface s;
    for (double tau : target.maturities()) {
        const auto smile = target.slice(tau);
        if (smile.size() < 4) {
            s.skipped_.push_back(tau);
            continue;
        }
        std::vector<double> k, v;
        for (const auto& q : smile) {
            k.push_back(q.strike);
            v.push_back(q.iv);
        }
        s.maturities_.push_back(tau);
        s.slices_.emplace_back(std::move(k), std::move(v));
    }
    if (s.slices_.empty()) throw SplineError("fit_spline_baseline: no maturity slice has 4 or more strikes");
    return s;
}

}  // namespace ivs
