#include "ivsforge/optim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace ivs::optim {

OptimResult nelder_mead(const std::function<double(const Vector&)>& objective, const Vector& x0,
                        const NelderMeadOptions& opts) {
    const auto n = x0.size();
    OptimResult res;
    const double f0 = objective(x0);
    res.evaluations = 1;
    if (!std::isfinite(f0)) throw std::invalid_argument("nelder_mead: objective is not finite at x0");
    res.x_min = x0;
    res.f_min = f0;
    if (opts.max_iter <= 0) {
        res.message = "zero iteration budget";
        return res;
    }

    auto eval = [&](const Vector& x) {
        ++res.evaluations;
        const double f = objective(x);
        return std::isfinite(f) ? f : std::numeric_limits<double>::infinity();
    };

    std::vector<Vector> pts(n + 1, x0);
    std::vector<double> fv(n + 1, f0);
    for (Eigen::Index i = 0; i < n; ++i) {
        pts[i + 1](i) += opts.initial_step;
        fv[i + 1] = eval(pts[i + 1]);
    }

    std::vector<std::size_t> order(n + 1);
    for (int it = 0; it < opts.max_iter; ++it) {
        res.iterations = it + 1;
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return fv[a] < fv[b]; });
        const auto best = order.front();
        const auto worst = order.back();
        const auto second = order[n - 1];

        double diameter = 0.0;
        for (std::size_t i = 0; i <= static_cast<std::size_t>(n); ++i)
            diameter = std::max(diameter, (pts[i] - pts[best]).lpNorm<Eigen::Infinity>());
        if (diameter < opts.x_tol || fv[worst] - fv[best] < opts.f_tol) {
            res.converged = true;
            res.message = diameter < opts.x_tol ? "simplex diameter below x_tol" : "f spread below f_tol";
            break;
        }

        Vector centroid = Vector::Zero(n);
        for (std::size_t i = 0; i <= static_cast<std::size_t>(n); ++i)
            if (i != worst) centroid += pts[i];
        centroid /= static_cast<double>(n);

        const Vector xr = centroid + (centroid - pts[worst]);
        const double fr = eval(xr);
        if (fr < fv[best]) {
            const Vector xe = centroid + 2.0 * (centroid - pts[worst]);
            const double fe = eval(xe);
            if (fe < fr) {
                pts[worst] = xe;
                fv[worst] = fe;
            } else {
                pts[worst] = xr;
                fv[worst] = fr;
            }
            continue;
        }
        if (fr < fv[second]) {
            pts[worst] = xr;
            fv[worst] = fr;
            continue;
        }
        // contraction: outside if the reflected point improved on the worst, inside otherwise
        const bool outside = fr < fv[worst];
        const Vector xc = outside ? Vector(centroid + 0.5 * (xr - centroid))
                                  : Vector(centroid + 0.5 * (pts[worst] - centroid));
        const double fc = eval(xc);
        if (fc < (outside ? fr : fv[worst])) {
            pts[worst] = xc;
            fv[worst] = fc;
            continue;
        }
        for (std::size_t i = 0; i <= static_cast<std::size_t>(n); ++i) {
            if (i == best) continue;
            pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
            fv[i] = eval(pts[i]);
        }
    }
    const auto best = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
    if (fv[best] <= res.f_min) {
        res.x_min = pts[best];
        res.f_min = fv[best];
    }
    if (!res.converged) res.message = "iteration budget exhausted";
    return res;
}

namespace {

struct LinePoint {
    double step;
    double f;
    double dphi;  // directional derivative
};

// Minimiser of the cubic through two points with values and slopes, clamped to [lo, hi].
double cubic_minimizer(const LinePoint& a, const LinePoint& b, double lo, double hi) {
    const double d1 = a.dphi + b.dphi - 3.0 * (a.f - b.f) / (a.step - b.step);
    const double disc = d1 * d1 - a.dphi * b.dphi;
    double t;
    if (disc >= 0.0 && std::isfinite(disc)) {
        const double d2 = std::copysign(std::sqrt(disc), b.step - a.step);
        t = b.step - (b.step - a.step) * (b.dphi + d2 - d1) / (b.dphi - a.dphi + 2.0 * d2);
    } else {
        t = 0.5 * (a.step + b.step);
    }
    if (!std::isfinite(t)) t = 0.5 * (lo + hi);
    // keep a margin away from the interval ends
    const double margin = 0.1 * (hi - lo);
    return std::clamp(t, lo + margin, hi - margin);
}

struct LineSearchResult {
    bool ok = false;
    double step = 0.0;
    double f = 0.0;
    Vector x;
    Vector g;
};

LineSearchResult strong_wolfe(const ValueAndGradient& fg, const Vector& x, double f0, const Vector& g0,
                              const Vector& dir, double step0, const LbfgsOptions& opts, int& evals) {
    const double dphi0 = g0.dot(dir);
    LineSearchResult best;
    best.f = f0;
    best.step = 0.0;

    auto probe = [&](double step, LineSearchResult& out) {
        out.step = step;
        out.x = x + step * dir;
        out.g.resize(x.size());
        ++evals;
        out.f = fg(out.x, out.g);
        if (!std::isfinite(out.f) || !out.g.allFinite()) {
            out.f = std::numeric_limits<double>::infinity();
            return std::numeric_limits<double>::quiet_NaN();
        }
        return out.g.dot(dir);
    };

    auto zoom = [&](LinePoint lo, LinePoint hi, int budget) -> LineSearchResult {
        LineSearchResult trial;
        for (int i = 0; i < budget; ++i) {
            const double a = std::min(lo.step, hi.step);
            const double b = std::max(lo.step, hi.step);
            double step;
            if (std::isfinite(hi.f) && std::isfinite(hi.dphi))
                step = cubic_minimizer(lo, hi, a, b);
            else
                step = 0.5 * (a + b);
            const double dphi = probe(step, trial);
            if (std::isfinite(trial.f) && trial.f < best.f) best = trial;
            if (!std::isfinite(trial.f) || trial.f > f0 + opts.c1 * step * dphi0 || trial.f >= lo.f) {
                hi = {step, trial.f, dphi};
            } else {
                if (std::abs(dphi) <= -opts.c2 * dphi0) {
                    trial.ok = true;
                    return trial;
                }
                if (dphi * (hi.step - lo.step) >= 0.0) hi = lo;
                lo = {step, trial.f, dphi};
            }
            if (std::abs(hi.step - lo.step) < 1e-16 * std::max(1.0, std::abs(lo.step))) break;
        }
        return best;
    };

    LinePoint prev{0.0, f0, dphi0};
    double step = step0;
    LineSearchResult trial;
    for (int i = 0; i < opts.max_line_search; ++i) {
        const double dphi = probe(step, trial);
        if (std::isfinite(trial.f) && trial.f < best.f) best = trial;
        if (!std::isfinite(trial.f)) {
            // back off towards the last good point
            auto r = zoom(prev, {step, trial.f, dphi}, opts.max_line_search);
            return r;
        }
        if (trial.f > f0 + opts.c1 * step * dphi0 || (i > 0 && trial.f >= prev.f))
            return zoom(prev, {step, trial.f, dphi}, opts.max_line_search);
        if (std::abs(dphi) <= -opts.c2 * dphi0) {
            trial.ok = true;
            return trial;
        }
        if (dphi >= 0.0) return zoom({step, trial.f, dphi}, prev, opts.max_line_search);
        prev = {step, trial.f, dphi};
        step *= 2.0;
    }
    return best;
}

}  // namespace

OptimResult lbfgs(const ValueAndGradient& objective, const Vector& x0, const LbfgsOptions& opts) {
    OptimResult res;
    Vector x = x0;
    Vector g(x0.size());
    double f = objective(x, g);
    res.evaluations = 1;
    if (!std::isfinite(f) || !g.allFinite()) throw std::invalid_argument("lbfgs: objective or gradient not finite at x0");
    res.x_min = x;
    res.f_min = f;

    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;
    bool reset_tried = false;

    for (int it = 0; it < opts.max_iter; ++it) {
        if (g.lpNorm<Eigen::Infinity>() < opts.g_tol) {
            res.converged = true;
            res.message = "gradient below g_tol";
            break;
        }
        res.iterations = it + 1;

        // two-loop recursion
        Vector q = g;
        std::vector<double> alpha(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
            alpha[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alpha[i] * y_hist[i];
        }
        double gamma = 1.0;
        if (!s_hist.empty()) gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
        Vector dir = gamma * q;
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(dir);
            dir += s_hist[i] * (alpha[i] - beta);
        }
        dir = -dir;
        if (!(g.dot(dir) < 0.0)) {
            dir = -g;
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        const double step0 = s_hist.empty() ? std::min(1.0, 1.0 / g.lpNorm<Eigen::Infinity>()) : 1.0;
        LineSearchResult ls = strong_wolfe(objective, x, f, g, dir, step0, opts, res.evaluations);
        if (!ls.ok && !(ls.step > 0.0 && ls.f < f)) {
            if (!reset_tried && !s_hist.empty()) {
                // retry once along steepest descent with a fresh memory
                reset_tried = true;
                s_hist.clear();
                y_hist.clear();
                rho_hist.clear();
                continue;
            }
            res.message = "line search failed";
            break;
        }
        reset_tried = false;

        const Vector s = ls.x - x;
        const Vector y = ls.g - g;
        const double f_prev = f;
        x = ls.x;
        g = ls.g;
        f = ls.f;
        if (f < res.f_min) {
            res.f_min = f;
            res.x_min = x;
        }
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(s);
            y_hist.push_back(y);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > opts.memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        if (opts.f_rel_tol > 0.0 && std::abs(f_prev - f) <= opts.f_rel_tol * std::max({1.0, std::abs(f), std::abs(f_prev)})) {
            res.converged = true;
            res.message = "relative decrease below f_rel_tol";
            break;
        }
    }
    if (!res.converged && res.message.empty()) res.message = "iteration budget exhausted";
    if (f < res.f_min) {
        res.f_min = f;
        res.x_min = x;
    }
    return res;
}

Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x) {
    Vector g(x.size());
    Vector xp = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = 1e-6 * (1.0 + std::abs(x(i)));
        xp(i) = x(i) + h;
        const double fp = f(xp);
        xp(i) = x(i) - h;
        const double fm = f(xp);
        xp(i) = x(i);
        g(i) = (fp - fm) / (2.0 * h);
    }
    return g;
}

IntervalTransform::IntervalTransform(double lo, double hi) : lo_(lo), hi_(hi) {
    if (!(lo < hi)) throw std::invalid_argument("IntervalTransform: need lo < hi");
}

double IntervalTransform::to_unbounded(double x) const {
    const double t = (x - lo_) / (hi_ - lo_);
    return std::log(t) - std::log1p(-t);
}

double IntervalTransform::to_bounded(double y) const {
    // sigmoid evaluated on the side where exp does not overflow
    double x;
    if (y >= 0.0) {
        const double e = std::exp(-y);
        x = hi_ - (hi_ - lo_) * (e / (1.0 + e));
    } else {
        const double e = std::exp(y);
        x = lo_ + (hi_ - lo_) * (e / (1.0 + e));
    }
    if (!(x > lo_)) x = std::nextafter(lo_, hi_);
    if (!(x < hi_)) x = std::nextafter(hi_, lo_);
    return x;
}

double IntervalTransform::derivative(double y) const {
    const double e = std::exp(-std::abs(y));
    return (hi_ - lo_) * e / ((1.0 + e) * (1.0 + e));
}

}  // namespace ivs::optim
