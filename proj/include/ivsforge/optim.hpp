#pragma once

#include <Eigen/Dense>

#include <functional>
#include <string>

namespace ivs::optim {

using Vector = Eigen::VectorXd;

struct OptimResult {
    Vector x_min;
    double f_min = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    std::string message;
};

struct NelderMeadOptions {
    int max_iter = 2000;
    double f_tol = 1e-12;  ///< stop when max f - min f over the simplex falls below this
    double x_tol = 1e-10;  ///< stop when the simplex diameter falls below this
    double initial_step = 0.1;
};

/// Downhill simplex with reflection 1, expansion 2, contraction 0.5, shrink 0.5.
/// Throws std::invalid_argument when the objective is not finite at x0.
OptimResult nelder_mead(const std::function<double(const Vector&)>& objective, const Vector& x0,
                        const NelderMeadOptions& opts = {});

/// Objective returning the value and writing the gradient into the second argument.
using ValueAndGradient = std::function<double(const Vector&, Vector&)>;

struct LbfgsOptions {
    int memory = 10;
    int max_iter = 500;
    double g_tol = 1e-6;   ///< infinity-norm gradient tolerance
    double f_rel_tol = 0;  ///< optional relative decrease stop (0 disables)
    double c1 = 1e-4;
    double c2 = 0.9;
    int max_line_search = 40;
};

/// Limited-memory BFGS with a strong-Wolfe line search (bracketing + cubic zoom).
/// Non-finite trial values are treated as failed steps and the line search
/// backs off. On line-search failure the best point found is returned with
/// converged = false.
OptimResult lbfgs(const ValueAndGradient& objective, const Vector& x0, const LbfgsOptions& opts = {});

/// Central-difference gradient with step h = 1e-6 (1 + |x_i|).
Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& x);

/// Logistic bijection between R and the open interval (lo, hi).
class IntervalTransform {
public:
    IntervalTransform(double lo, double hi);

    double lo() const { return lo_; }
    double hi() const { return hi_; }

    double to_unbounded(double x) const;
    /// Always strictly inside (lo, hi), including for large |y|.
    double to_bounded(double y) const;
    /// d to_bounded / dy.
    double derivative(double y) const;

private:
    double lo_;
    double hi_;
};

}  // namespace ivs::optim
