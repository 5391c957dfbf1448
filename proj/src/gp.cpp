#include "ivsforge/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace ivs {

namespace {
constexpr double kSqrt5 = 2.23606797749978969640917366873128;
}

void Matern52Kernel::validate() const {
    if (!(variance > 0.0)) throw GpError("Matern52Kernel: variance must be positive");
    for (double l : lengthscales)
        if (!(l > 0.0)) throw GpError("Matern52Kernel: lengthscales must be positive");
}

double matern52_shape(double r) {
    const double s = kSqrt5 * r;
    return (1.0 + s + s * s / 3.0) * std::exp(-s);
}

double matern52(const Eigen::Vector2d& x, const Eigen::Vector2d& y, const Matern52Kernel& k) {
    const double d0 = (x(0) - y(0)) / k.lengthscales[0];
    const double d1 = (x(1) - y(1)) / k.lengthscales[1];
    return k.variance * matern52_shape(std::sqrt(d0 * d0 + d1 * d1));
}

Eigen::MatrixXd matern52_matrix(const Eigen::MatrixX2d& a, const Eigen::MatrixX2d& b, const Matern52Kernel& k) {
    Eigen::MatrixXd out(a.rows(), b.rows());
    const double i0 = 1.0 / k.lengthscales[0];
    const double i1 = 1.0 / k.lengthscales[1];
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            const double d0 = (a(i, 0) - b(j, 0)) * i0;
            const double d1 = (a(i, 1) - b(j, 1)) * i1;
            out(i, j) = k.variance * matern52_shape(std::sqrt(d0 * d0 + d1 * d1));
        }
    }
    return out;
}

InputNormalizer InputNormalizer::from_quotes(const QuoteSet& quotes, double spot) {
    if (quotes.empty()) throw GpError("InputNormalizer: no quotes");
    InputNormalizer n;
    n.strike_scale = spot;
    double tmax = 0.0, ks = 0.0, ts = 0.0, ys = 0.0;
    for (const auto& q : quotes.quotes()) {
        tmax = std::max(tmax, q.maturity);
        ks += q.strike;
        ts += q.maturity;
        ys += q.iv;
    }
    const auto m = static_cast<double>(quotes.size());
    n.maturity_scale = tmax;
    n.strike_shift = ks / m / spot;
    n.maturity_shift = ts / m / tmax;
    n.target_mean = ys / m;
    return n;
}

Eigen::Vector2d InputNormalizer::input(double strike, double maturity) const {
    return {strike / strike_scale - strike_shift, maturity / maturity_scale - maturity_shift};
}

Eigen::MatrixX2d InputNormalizer::inputs(const std::vector<OptionQuote>& quotes) const {
    Eigen::MatrixX2d x(static_cast<Eigen::Index>(quotes.size()), 2);
    for (std::size_t i = 0; i < quotes.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = input(quotes[i].strike, quotes[i].maturity);
    return x;
}

Eigen::MatrixX2d InputNormalizer::inputs(const std::vector<Contract>& points) const {
    Eigen::MatrixX2d x(static_cast<Eigen::Index>(points.size()), 2);
    for (std::size_t i = 0; i < points.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = input(points[i].strike, points[i].maturity);
    return x;
}

Eigen::VectorXd InputNormalizer::centred_targets(const std::vector<OptionQuote>& quotes) const {
    Eigen::VectorXd y(static_cast<Eigen::Index>(quotes.size()));
    for (std::size_t i = 0; i < quotes.size(); ++i) y(static_cast<Eigen::Index>(i)) = quotes[i].iv - target_mean;
    return y;
}

JitteredCholesky cholesky_with_jitter(const Eigen::MatrixXd& a, double scale) {
    JitteredCholesky out;
    out.llt.compute(a);
    if (out.llt.info() == Eigen::Success) return out;
    for (double rel = 1e-10; rel <= 1e-4 * (1.0 + 1e-9); rel *= 10.0) {
        out.jitter = rel * scale;
        Eigen::MatrixXd aj = a;
        aj.diagonal().array() += out.jitter;
        out.llt.compute(aj);
        if (out.llt.info() == Eigen::Success) return out;
    }
    throw GpError("covariance not positive definite after jitter " + std::to_string(out.jitter));
}

GpModel GpModel::condition(const InputNormalizer& norm, const Matern52Kernel& kernel, double noise_var,
                           const QuoteSet& quotes) {
    kernel.validate();
    if (quotes.empty()) throw GpError("GpModel: no training data");
    GpModel m;
    m.norm_ = norm;
    m.kernel_ = kernel;
    m.noise_var_ = noise_var;
    m.x_ = norm.inputs(quotes.quotes());
    const Eigen::VectorXd y = norm.centred_targets(quotes.quotes());
    Eigen::MatrixXd k = matern52_matrix(m.x_, m.x_, kernel);
    k.diagonal().array() += noise_var;
    auto chol = cholesky_with_jitter(k, kernel.variance);
    m.jitter_ = chol.jitter;
    m.chol_l_ = chol.llt.matrixL();
    m.weights_ = chol.llt.solve(y);
    const auto n = static_cast<double>(y.size());
    m.nlml_ = 0.5 * y.dot(m.weights_) + m.chol_l_.diagonal().array().log().sum() +
              0.5 * n * std::log(2.0 * std::numbers::pi);
    return m;
}

Prediction GpModel::predict(const std::vector<Contract>& points) const {
    const Eigen::MatrixX2d xs = norm_.inputs(points);
    const Eigen::MatrixXd ks = matern52_matrix(x_, xs, kernel_);  // n x m
    Prediction p;
    p.mean = (ks.transpose() * weights_).array() + norm_.target_mean;
    const Eigen::MatrixXd v = chol_l_.triangularView<Eigen::Lower>().solve(ks);
    p.variance = (kernel_.variance - v.colwise().squaredNorm().array()).matrix();
    const double floor = 1e-15 * kernel_.variance;
    for (Eigen::Index i = 0; i < p.variance.size(); ++i) p.variance(i) = std::max(p.variance(i), floor);
    return p;
}

double GpModel::predict_mean(double strike, double maturity) const {
    return predict({{strike, maturity}}).mean(0);
}

nlohmann::json GpModel::to_json() const {
    return {{"kernel", {{"variance", kernel_.variance}, {"lengthscales", kernel_.lengthscales}}},
            {"noise_var", noise_var_},
            {"jitter", jitter_},
            {"nlml", nlml_},
            {"converged", converged_},
            {"normalizer",
             {{"strike_scale", norm_.strike_scale},
              {"strike_shift", norm_.strike_shift},
              {"maturity_scale", norm_.maturity_scale},
              {"maturity_shift", norm_.maturity_shift},
              {"target_mean", norm_.target_mean}}}};
}

GpParameterization::GpParameterization(const GpOptions& opts)
    : log_ls_(std::log(opts.lengthscale_lo), std::log(opts.lengthscale_hi)), noise_floor_(opts.noise_floor) {}

optim::Vector GpParameterization::pack(const Matern52Kernel& k, double noise_var) const {
    optim::Vector t(4);
    auto ls = [&](double l) {
        const double lo = std::exp(log_ls_.lo()) * 1.0001, hi = std::exp(log_ls_.hi()) * 0.9999;
        return log_ls_.to_unbounded(std::log(std::clamp(l, lo, hi)));
    };
    t << std::log(k.variance), ls(k.lengthscales[0]), ls(k.lengthscales[1]),
        std::log(std::max(noise_var - noise_floor_, 1e-300));
    return t;
}

std::pair<Matern52Kernel, double> GpParameterization::unpack(const optim::Vector& t) const {
    Matern52Kernel k;
    k.variance = std::exp(t(0));
    k.lengthscales = {std::exp(log_ls_.to_bounded(t(1))), std::exp(log_ls_.to_bounded(t(2)))};
    return {k, noise_floor_ + std::exp(t(3))};
}

double GpParameterization::lengthscale_derivative(const optim::Vector& t, int d) const {
    const double u = t(1 + d);
    return std::exp(log_ls_.to_bounded(u)) * log_ls_.derivative(u);
}

double gp_nlml(const GpParameterization& param, const optim::Vector& theta, const Eigen::MatrixX2d& x,
               const Eigen::VectorXd& y, optim::Vector* grad) {
    const auto [kernel, noise] = param.unpack(theta);
    if (!std::isfinite(kernel.variance) || !std::isfinite(noise)) return std::numeric_limits<double>::infinity();
    const Eigen::Index n = x.rows();
    Eigen::MatrixXd k = matern52_matrix(x, x, kernel);
    Eigen::MatrixXd a = k;
    a.diagonal().array() += noise;
    JitteredCholesky chol;
    try {
        chol = cholesky_with_jitter(a, kernel.variance);
    } catch (const GpError&) {
        return std::numeric_limits<double>::infinity();
    }
    const Eigen::VectorXd alpha = chol.llt.solve(y);
    const Eigen::MatrixXd l = chol.llt.matrixL();
    const double value = 0.5 * y.dot(alpha) + l.diagonal().array().log().sum() +
                         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    if (!grad) return value;

    // W = alpha alpha^T - A^{-1};  dNLML/dp = -1/2 tr(W dA/dp)
    Eigen::MatrixXd w = -chol.llt.solve(Eigen::MatrixXd::Identity(n, n));
    w.noalias() += alpha * alpha.transpose();

    double g_var = 0.0, g_l0 = 0.0, g_l1 = 0.0;
    const double il0 = 1.0 / kernel.lengthscales[0], il1 = 1.0 / kernel.lengthscales[1];
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d0 = (x(i, 0) - x(j, 0)) * il0;
            const double d1 = (x(i, 1) - x(j, 1)) * il1;
            const double r = std::sqrt(d0 * d0 + d1 * d1);
            const double common = kernel.variance * (5.0 / 3.0) * (1.0 + kSqrt5 * r) * std::exp(-kSqrt5 * r);
            g_var += w(i, j) * k(i, j);
            g_l0 += w(i, j) * common * d0 * d0;  // dK/dlog l0
            g_l1 += w(i, j) * common * d1 * d1;
        }
    }
    grad->resize(4);
    (*grad)(0) = -0.5 * g_var;
    (*grad)(1) = -0.5 * g_l0 / kernel.lengthscales[0] * param.lengthscale_derivative(theta, 0);
    (*grad)(2) = -0.5 * g_l1 / kernel.lengthscales[1] * param.lengthscale_derivative(theta, 1);
    (*grad)(3) = -0.5 * w.trace() * std::exp(theta(3));
    return value;
}

GpModel fit_gp(const QuoteSet& quotes, const GpOptions& opts) {
    if (quotes.size() < 2) throw GpError("fit_gp: need at least 2 quotes");
    const InputNormalizer norm = InputNormalizer::from_quotes(quotes, opts.spot);
    const Eigen::MatrixX2d x = norm.inputs(quotes.quotes());
    const Eigen::VectorXd y = norm.centred_targets(quotes.quotes());
    const GpParameterization param(opts);

    const double var0 = std::max(y.squaredNorm() / static_cast<double>(y.size()), 1e-8);
    Matern52Kernel k0;
    k0.variance = var0;
    k0.lengthscales = {0.5, 0.5};
    std::vector<optim::Vector> starts{param.pack(k0, 1e-4)};

    std::mt19937_64 rng(opts.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int r = 0; r < opts.restarts; ++r) {
        Matern52Kernel k = k0;
        k.variance = var0 * std::exp(2.0 * unif(rng) - 1.0);
        k.lengthscales[0] = std::exp(std::log(0.1) + unif(rng) * std::log(20.0));
        k.lengthscales[1] = std::exp(std::log(0.1) + unif(rng) * std::log(20.0));
        const double noise = std::exp(std::log(1e-6) + unif(rng) * std::log(1e3));
        starts.push_back(param.pack(k, noise));
    }

    // an input with no spread carries no likelihood information; park its
    // lengthscale at the cap (the gradient there is exactly zero, so it stays)
    for (int d = 0; d < 2; ++d) {
        if (x.col(d).maxCoeff() - x.col(d).minCoeff() > 0.0) continue;
        Matern52Kernel capped;
        capped.lengthscales = {opts.lengthscale_hi, opts.lengthscale_hi};
        const double u = param.pack(capped, 1.0)(1 + d);
        for (auto& s : starts) s(1 + d) = u;
    }

    auto objective = [&](const optim::Vector& t, optim::Vector& g) { return gp_nlml(param, t, x, y, &g); };
    optim::OptimResult best;
    best.f_min = std::numeric_limits<double>::infinity();
    for (const auto& s : starts) {
        if (!std::isfinite(gp_nlml(param, s, x, y, nullptr))) continue;
        const optim::OptimResult r = optim::lbfgs(objective, s, opts.lbfgs);
        if (r.f_min < best.f_min) best = r;
    }
    if (!std::isfinite(best.f_min)) throw GpError("fit_gp: no start produced a finite likelihood");
    const auto [kernel, noise] = param.unpack(best.x_min);
    GpModel m = GpModel::condition(norm, kernel, noise, quotes);
    m.set_converged(best.converged);
    return m;
}

}  // namespace ivs
